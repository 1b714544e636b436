//! Time-dependent coefficients of the dynamics and the quantities derived
//! from the viscous damping γ:
//!
//! ```text
//! p(t)   = exp(∫_{t0}^t γ)
//! Γ(t)   = p(t) ∫_t^∞ ds / p(s)
//! λ_c(t) = p(t) / (c + ∫_{t0}^t p)
//! θ(t)   = ∫_{t0}^t Γ
//! ```
//!
//! Closed forms are used where they exist; every quantity also has a
//! quadrature route so the two can be checked against each other.

use crate::error::{invalid, Error, Result};
use crate::interp::MonotoneCubic;
use crate::quad::{integrate, QuadTol};
use crate::special::scaled_upper_incomplete_gamma;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Relative tolerance of the geometric tail estimate that stops the
/// truncation horizon of the Γ integral from doubling further.
pub const GAMMA_TAIL_TOL: f64 = 1e-9;
const MAX_DOUBLINGS: usize = 64;
const INNER_TOL: f64 = 1e-12;

fn default_t0() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleValue {
    pub value: f64,
    pub derivative: f64,
}

/// Route used to evaluate a derived quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    ClosedForm,
    Quadrature,
}

/// Log-spaced grid of `n ≥ 2` points on `[lo, hi]`, endpoints exact.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2, "log grid needs 0 < lo < hi and n ≥ 2");
    let (a, b) = (lo.ln(), hi.ln());
    let mut g: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
    g[0] = lo;
    g[n - 1] = hi;
    g
}

fn check_time(t: f64, t0: f64) -> Result<()> {
    if !(t >= t0) || !t.is_finite() {
        return Err(Error::Domain { t, lo: t0, hi: f64::INFINITY });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Viscous damping γ
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DampingKind {
    /// γ(t) = α·t^(−r), r ∈ [0, 1].
    Power { alpha: f64, r: f64 },
    Constant { value: f64 },
    /// Sorted `(t, γ(t))` knots, monotone cubic in between.
    Table { knots: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingSpec {
    #[serde(flatten)]
    pub kind: DampingKind,
    #[serde(default = "default_t0")]
    pub t0: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct TableData {
    curve: MonotoneCubic,
    // Beyond the last knot γ continues as γ_N·(t/t_N)^(−tail_exponent).
    tail_exponent: f64,
    last: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DampingSpec", into = "DampingSpec")]
pub struct DampingSchedule {
    kind: DampingKind,
    t0: f64,
    table: Option<TableData>,
}

impl TryFrom<DampingSpec> for DampingSchedule {
    type Error = Error;

    fn try_from(spec: DampingSpec) -> Result<Self> {
        let DampingSpec { kind, t0 } = spec;
        if !(t0 >= 0.0) || !t0.is_finite() {
            return Err(invalid(format!("damping t0 must be finite and nonnegative, got {t0}")));
        }
        let mut table = None;
        match &kind {
            DampingKind::Power { alpha, r } => {
                if !(*alpha > 0.0) || !alpha.is_finite() {
                    return Err(invalid(format!("power damping needs alpha > 0, got {alpha}")));
                }
                if !(0.0..=1.0).contains(r) {
                    return Err(invalid(format!("power damping needs r in [0, 1], got {r}")));
                }
                if *r > 0.0 && t0 <= 0.0 {
                    return Err(invalid("power damping with r > 0 needs t0 > 0"));
                }
            }
            DampingKind::Constant { value } => {
                if !(*value >= 0.0) || !value.is_finite() {
                    return Err(invalid(format!("constant damping must be ≥ 0, got {value}")));
                }
            }
            DampingKind::Table { knots } => {
                let xs: Vec<f64> = knots.iter().map(|k| k[0]).collect();
                let ys: Vec<f64> = knots.iter().map(|k| k[1]).collect();
                if ys.iter().any(|&y| y < 0.0) {
                    return Err(invalid("damping table values must be nonnegative"));
                }
                let curve = MonotoneCubic::new(xs, ys)?;
                let (lo, _) = curve.domain();
                if t0 < lo {
                    return Err(invalid(format!("damping t0 = {t0} precedes the first knot {lo}")));
                }
                if lo <= 0.0 {
                    return Err(invalid("damping table knots must lie at t > 0"));
                }
                let n = knots.len();
                let (t1, g1) = (knots[n - 2][0], knots[n - 2][1]);
                let (t2, g2) = (knots[n - 1][0], knots[n - 1][1]);
                let tail_exponent = if g1 > 0.0 && g2 > 0.0 {
                    -(g2 / g1).ln() / (t2 / t1).ln()
                } else {
                    0.0
                };
                // The interpolant itself must stay nonnegative; monotone
                // pieces cannot dip below their knots, others are sampled.
                let c = &curve;
                for w in knots.windows(2) {
                    for j in 1..16 {
                        let t = w[0][0] + (w[1][0] - w[0][0]) * j as f64 / 16.0;
                        if c.eval(t)?.0 < 0.0 {
                            return Err(invalid(format!("damping interpolant negative near t = {t}")));
                        }
                    }
                }
                table = Some(TableData { curve, tail_exponent, last: (t2, g2) });
            }
        }
        Ok(Self { kind, t0, table })
    }
}

impl From<DampingSchedule> for DampingSpec {
    fn from(s: DampingSchedule) -> Self {
        DampingSpec { kind: s.kind, t0: s.t0 }
    }
}

impl DampingSchedule {
    pub fn power(alpha: f64, r: f64, t0: f64) -> Result<Self> {
        DampingSpec { kind: DampingKind::Power { alpha, r }, t0 }.try_into()
    }

    pub fn constant(value: f64, t0: f64) -> Result<Self> {
        DampingSpec { kind: DampingKind::Constant { value }, t0 }.try_into()
    }

    /// Table schedule; `t0` is the first knot time.
    pub fn table(knots: Vec<(f64, f64)>) -> Result<Self> {
        let t0 = knots.first().map(|k| k.0).unwrap_or(0.0);
        let knots = knots.into_iter().map(|(t, g)| [t, g]).collect();
        DampingSpec { kind: DampingKind::Table { knots }, t0 }.try_into()
    }

    /// Table sampled from `f` at `n` log-spaced knots on `[lo, hi]`.
    pub fn tabulate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::table(log_grid(lo, hi, n).into_iter().map(|t| (t, f(t))).collect())
    }

    pub fn kind(&self) -> &DampingKind {
        &self.kind
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Upper end of the evaluation domain (finite only for tables).
    pub fn t_max(&self) -> f64 {
        match &self.table {
            Some(tab) => tab.curve.domain().1,
            None => f64::INFINITY,
        }
    }

    fn constant_rate(&self) -> Option<f64> {
        match self.kind {
            DampingKind::Power { alpha, r } if r == 0.0 => Some(alpha),
            DampingKind::Constant { value } => Some(value),
            _ => None,
        }
    }

    /// `(α, r)` when γ = α·t^(−r); constants report `r = 0`.
    pub fn power_params(&self) -> Option<(f64, f64)> {
        match self.kind {
            DampingKind::Power { alpha, r } => Some((alpha, r)),
            DampingKind::Constant { value } => Some((value, 0.0)),
            DampingKind::Table { .. } => None,
        }
    }

    /// γ(t) and γ'(t).
    pub fn eval(&self, t: f64) -> Result<ScheduleValue> {
        check_time(t, self.t0)?;
        if let Some(tab) = &self.table {
            let (value, derivative) = tab.curve.eval(t)?;
            return Ok(ScheduleValue { value, derivative });
        }
        Ok(self.closed_value(t))
    }

    fn closed_value(&self, t: f64) -> ScheduleValue {
        match self.kind {
            DampingKind::Power { alpha, r } if r > 0.0 => {
                let value = alpha * t.powf(-r);
                ScheduleValue { value, derivative: -r * value / t }
            }
            DampingKind::Power { alpha, .. } => ScheduleValue { value: alpha, derivative: 0.0 },
            DampingKind::Constant { value } => ScheduleValue { value, derivative: 0.0 },
            DampingKind::Table { .. } => unreachable!("tables are evaluated through the interpolant"),
        }
    }

    /// γ(t) without domain checks; tables continue past the last knot with
    /// the power law fitted to the final two knots.
    pub fn value(&self, t: f64) -> f64 {
        match &self.table {
            Some(tab) if t > tab.last.0 => tab.last.1 * (t / tab.last.0).powf(-tab.tail_exponent),
            Some(tab) => tab.curve.eval(t.max(self.t0)).map(|v| v.0).unwrap_or(f64::NAN),
            None => self.closed_value(t).value,
        }
    }

    /// ∫_{t0}^t γ.
    fn integral(&self, t: f64) -> f64 {
        match &self.table {
            Some(tab) => {
                let (t_n, g_n) = tab.last;
                let start = tab.curve.integral_from_start(self.t0).unwrap_or(0.0);
                if t <= t_n {
                    tab.curve.integral_from_start(t).unwrap_or(f64::NAN) - start
                } else {
                    let k = tab.tail_exponent;
                    let tail = if (k - 1.0).abs() < 1e-12 {
                        g_n * t_n * (t / t_n).ln()
                    } else {
                        g_n * t_n.powf(k) * (t.powf(1.0 - k) - t_n.powf(1.0 - k)) / (1.0 - k)
                    };
                    tab.curve.integral_from_start(t_n).unwrap_or(f64::NAN) - start + tail
                }
            }
            None => self.integral_between(self.t0, t),
        }
    }

    /// ∫_t^s γ, computed without forming p(t) or p(s).
    fn integral_between(&self, t: f64, s: f64) -> f64 {
        match self.kind {
            DampingKind::Power { alpha, r } if r == 1.0 => alpha * (s / t).ln(),
            DampingKind::Power { alpha, r } if r > 0.0 => {
                alpha * (s.powf(1.0 - r) - t.powf(1.0 - r)) / (1.0 - r)
            }
            DampingKind::Power { alpha, .. } => alpha * (s - t),
            DampingKind::Constant { value } => value * (s - t),
            DampingKind::Table { .. } => self.integral(s) - self.integral(t),
        }
    }

    fn quadrature_integral(&self, t: f64) -> Result<f64> {
        let tol = QuadTol::relative(1e-12);
        Ok(integrate(|s| self.value(s), self.t0, t, tol)?.value)
    }

    fn closed_form_missing(what: &str) -> Error {
        invalid(format!("no closed form for {what} with a tabulated damping"))
    }

    /// p(t) = exp(∫_{t0}^t γ).
    pub fn p(&self, t: f64) -> Result<f64> {
        check_time(t, self.t0)?;
        if t > self.t_max() {
            return Err(Error::Domain { t, lo: self.t0, hi: self.t_max() });
        }
        Ok(self.integral(t).exp())
    }

    pub fn p_with(&self, t: f64, how: Evaluation) -> Result<f64> {
        match how {
            Evaluation::ClosedForm if self.table.is_some() => Err(Self::closed_form_missing("p")),
            Evaluation::ClosedForm => self.p(t),
            Evaluation::Quadrature => {
                check_time(t, self.t0)?;
                Ok(self.quadrature_integral(t)?.exp())
            }
        }
    }

    fn gamma_hypothesis_failure(detail: String) -> Error {
        Error::Hypothesis { name: "H_gamma", detail }
    }

    /// Γ(t) = p(t) ∫_t^∞ ds/p(s). Closed form where one exists, otherwise
    /// truncated quadrature.
    pub fn capital_gamma(&self, t: f64) -> Result<f64> {
        let how = if self.table.is_some() { Evaluation::Quadrature } else { Evaluation::ClosedForm };
        self.capital_gamma_with(t, how)
    }

    pub fn capital_gamma_with(&self, t: f64, how: Evaluation) -> Result<f64> {
        check_time(t, self.t0)?;
        match how {
            Evaluation::Quadrature => self.capital_gamma_quadrature(t),
            Evaluation::ClosedForm => match self.kind {
                DampingKind::Power { alpha, r } if r == 1.0 => {
                    if alpha <= 1.0 {
                        return Err(Self::gamma_hypothesis_failure(format!(
                            "∫ 1/p diverges for γ = {alpha}/t (needs alpha > 1)"
                        )));
                    }
                    Ok(t / (alpha - 1.0))
                }
                DampingKind::Power { alpha, r } if r > 0.0 => {
                    let c = alpha / (1.0 - r);
                    let a = 1.0 / (1.0 - r);
                    let x = c * t.powf(1.0 - r);
                    Ok(t.powf(r) * scaled_upper_incomplete_gamma(a, x)? / alpha)
                }
                DampingKind::Power { alpha: value, .. } | DampingKind::Constant { value } => {
                    if value <= 0.0 {
                        return Err(Self::gamma_hypothesis_failure("γ ≡ 0 gives ∫ 1/p = ∞".into()));
                    }
                    Ok(1.0 / value)
                }
                DampingKind::Table { .. } => Err(Self::closed_form_missing("Gamma")),
            },
        }
    }

    fn capital_gamma_quadrature(&self, t: f64) -> Result<f64> {
        let kernel = |s: f64| (-self.integral_between(t, s)).exp();
        let tol = QuadTol::relative(INNER_TOL);
        let g = self.value(t);
        let mut width = if g > 0.0 { (1.0 / g).max(1.0) } else { 1.0 };
        let mut lo = t;
        let mut hi = t + width;
        let mut total = 0.0;
        for _ in 0..MAX_DOUBLINGS {
            total += integrate(kernel, lo, hi, tol)?.value;
            let g_hi = self.value(hi);
            let tail = kernel(hi) / g_hi;
            if g_hi > 0.0 && tail < GAMMA_TAIL_TOL * total {
                return Ok(total);
            }
            lo = hi;
            width *= 2.0;
            hi = t + width;
        }
        Err(Self::gamma_hypothesis_failure(format!(
            "tail of ∫_t^H 1/p not below {GAMMA_TAIL_TOL:e} of the running value after H = {hi:e}"
        )))
    }

    /// λ_c(t) = p(t)/(c + ∫_{t0}^t p).
    pub fn lambda_c(&self, c: f64, t: f64) -> Result<f64> {
        let closed = match self.kind {
            DampingKind::Power { r, .. } => r == 1.0 || r == 0.0,
            DampingKind::Constant { .. } => true,
            DampingKind::Table { .. } => false,
        };
        let how = if closed { Evaluation::ClosedForm } else { Evaluation::Quadrature };
        self.lambda_c_with(c, t, how)
    }

    pub fn lambda_c_with(&self, c: f64, t: f64, how: Evaluation) -> Result<f64> {
        check_time(t, self.t0)?;
        if !(c > 0.0) {
            return Err(invalid(format!("lambda_c needs c > 0, got {c}")));
        }
        let t0 = self.t0;
        match how {
            Evaluation::ClosedForm => match (self.kind.clone(), self.constant_rate()) {
                (DampingKind::Power { alpha, r }, _) if r == 1.0 => {
                    let ratio = t / t0;
                    let num = ratio.powf(alpha);
                    Ok(num / (c + t0 * (ratio.powf(alpha + 1.0) - 1.0) / (alpha + 1.0)))
                }
                (_, Some(g)) => {
                    // p = e^{g(t−t0)}; divide through by p to stay finite.
                    let inv_p = (-g * (t - t0)).exp();
                    let integral_over_p = if g > 0.0 { (1.0 - inv_p) / g } else { t - t0 };
                    Ok(1.0 / (c * inv_p + integral_over_p))
                }
                _ => Err(invalid("no closed form for lambda_c with this damping")),
            },
            Evaluation::Quadrature => {
                let tol = QuadTol::relative(INNER_TOL);
                let weight = integrate(|s| (-self.integral_between(s, t)).exp(), t0, t, tol)?.value;
                let inv_p = (-self.integral(t)).exp();
                Ok(1.0 / (c * inv_p + weight))
            }
        }
    }

    /// The constant `c = t0/(α+1)` giving λ_c(t) = (α+1)/t for γ = α/t.
    pub fn default_lambda_constant(&self) -> Option<f64> {
        match self.kind {
            DampingKind::Power { alpha, r } if r == 1.0 => Some(self.t0 / (alpha + 1.0)),
            _ => None,
        }
    }

    /// θ(t) = ∫_{t0}^t Γ.
    pub fn theta(&self, t: f64) -> Result<f64> {
        let closed = match self.kind {
            DampingKind::Power { r, .. } => r == 1.0 || r == 0.0,
            DampingKind::Constant { .. } => true,
            DampingKind::Table { .. } => false,
        };
        self.theta_with(t, if closed { Evaluation::ClosedForm } else { Evaluation::Quadrature })
    }

    pub fn theta_with(&self, t: f64, how: Evaluation) -> Result<f64> {
        check_time(t, self.t0)?;
        let t0 = self.t0;
        match how {
            Evaluation::ClosedForm => match self.kind {
                DampingKind::Power { alpha, r } if r == 1.0 => {
                    self.capital_gamma_with(t, Evaluation::ClosedForm)?;
                    Ok((t * t - t0 * t0) / (2.0 * (alpha - 1.0)))
                }
                DampingKind::Power { alpha: g, r } if r == 0.0 => {
                    self.capital_gamma_with(t, Evaluation::ClosedForm)?;
                    Ok((t - t0) / g)
                }
                DampingKind::Constant { value: g } => {
                    self.capital_gamma_with(t, Evaluation::ClosedForm)?;
                    Ok((t - t0) / g)
                }
                _ => Err(invalid("no closed form for theta with this damping")),
            },
            Evaluation::Quadrature => {
                if t == t0 {
                    return Ok(0.0);
                }
                let mut failure = None;
                let value = integrate(
                    |s| match self.capital_gamma(s) {
                        Ok(v) => v,
                        Err(e) => {
                            failure.get_or_insert(e);
                            f64::NAN
                        }
                    },
                    t0,
                    t,
                    QuadTol::relative(1e-10),
                );
                // Borrow of `failure` ends with the closure above.
                match (failure, value) {
                    (Some(e), _) => Err(e),
                    (None, v) => Ok(v?.value),
                }
            }
        }
    }

    /// θ at each of the sorted `times`, accumulating segment integrals.
    pub fn theta_series(&self, times: &[f64]) -> Result<Vec<f64>> {
        if self.theta_with(self.t0, Evaluation::ClosedForm).is_ok() {
            return times.iter().map(|&t| self.theta(t)).collect();
        }
        let mut out = Vec::with_capacity(times.len());
        let mut acc = 0.0;
        let mut prev = self.t0;
        for &t in times {
            check_time(t, prev)?;
            let mut failure = None;
            let seg = integrate(
                |s| self.capital_gamma(s).unwrap_or_else(|e| {
                    failure.get_or_insert(e);
                    f64::NAN
                }),
                prev,
                t,
                QuadTol::relative(1e-10),
            );
            if let Some(e) = failure {
                return Err(e);
            }
            acc += seg?.value;
            out.push(acc);
            prev = t;
        }
        Ok(out)
    }

    /// Whether γ is nonincreasing on its whole domain.
    pub fn is_nonincreasing(&self) -> bool {
        match &self.kind {
            DampingKind::Power { .. } | DampingKind::Constant { .. } => true,
            DampingKind::Table { knots } => {
                knots.windows(2).all(|w| w[1][1] <= w[0][1])
                    && self.table.as_ref().map_or(true, |t| t.tail_exponent >= 0.0)
            }
        }
    }
}

/// A quantity derived from γ, usable as a time weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "quantity", rename_all = "snake_case")]
pub enum DerivedQuantity {
    P,
    Gamma,
    LambdaC { c: f64 },
    Theta,
}

impl DerivedQuantity {
    pub fn evaluate(&self, gamma: &DampingSchedule, t: f64) -> Result<f64> {
        match *self {
            DerivedQuantity::P => gamma.p(t),
            DerivedQuantity::Gamma => gamma.capital_gamma(t),
            DerivedQuantity::LambdaC { c } => gamma.lambda_c(c, t),
            DerivedQuantity::Theta => gamma.theta(t),
        }
    }

    pub fn evaluate_with(&self, gamma: &DampingSchedule, t: f64, how: Evaluation) -> Result<f64> {
        match *self {
            DerivedQuantity::P => gamma.p_with(t, how),
            DerivedQuantity::Gamma => gamma.capital_gamma_with(t, how),
            DerivedQuantity::LambdaC { c } => gamma.lambda_c_with(c, t, how),
            DerivedQuantity::Theta => gamma.theta_with(t, how),
        }
    }
}

// ---------------------------------------------------------------------------
// Geometric (Hessian-driven) damping β
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometricKind {
    Zero,
    Constant { value: f64 },
    /// β(t) = γ0 + β1/t.
    AffineInverse { gamma0: f64, beta1: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricSpec {
    #[serde(flatten)]
    pub kind: GeometricKind,
    #[serde(default = "default_t0")]
    pub t0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometricSpec", into = "GeometricSpec")]
pub struct GeometricSchedule {
    kind: GeometricKind,
    t0: f64,
}

impl TryFrom<GeometricSpec> for GeometricSchedule {
    type Error = Error;

    fn try_from(spec: GeometricSpec) -> Result<Self> {
        let GeometricSpec { kind, t0 } = spec;
        if !(t0 >= 0.0) || !t0.is_finite() {
            return Err(invalid(format!("geometric damping t0 must be ≥ 0, got {t0}")));
        }
        match kind {
            GeometricKind::Zero => {}
            GeometricKind::Constant { value } => {
                if !(value >= 0.0) || !value.is_finite() {
                    return Err(invalid(format!("constant beta must be ≥ 0, got {value}")));
                }
            }
            GeometricKind::AffineInverse { gamma0, beta1 } => {
                if !(gamma0 > 0.0) || !(beta1 >= 0.0) || !gamma0.is_finite() || !beta1.is_finite() {
                    return Err(invalid("affine-inverse beta needs gamma0 > 0 and beta1 ≥ 0"));
                }
                if beta1 > 0.0 && t0 <= 0.0 {
                    return Err(invalid("affine-inverse beta with beta1 > 0 needs t0 > 0"));
                }
            }
        }
        Ok(Self { kind, t0 })
    }
}

impl From<GeometricSchedule> for GeometricSpec {
    fn from(s: GeometricSchedule) -> Self {
        GeometricSpec { kind: s.kind, t0: s.t0 }
    }
}

impl GeometricSchedule {
    pub fn zero(t0: f64) -> Self {
        Self { kind: GeometricKind::Zero, t0 }
    }

    pub fn constant(value: f64, t0: f64) -> Result<Self> {
        GeometricSpec { kind: GeometricKind::Constant { value }, t0 }.try_into()
    }

    pub fn affine_inverse(gamma0: f64, beta1: f64, t0: f64) -> Result<Self> {
        GeometricSpec { kind: GeometricKind::AffineInverse { gamma0, beta1 }, t0 }.try_into()
    }

    pub fn kind(&self) -> &GeometricKind {
        &self.kind
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, GeometricKind::Zero)
    }

    pub fn eval(&self, t: f64) -> Result<ScheduleValue> {
        check_time(t, self.t0)?;
        Ok(self.value_and_derivative(t))
    }

    pub fn value_and_derivative(&self, t: f64) -> ScheduleValue {
        match self.kind {
            GeometricKind::Zero => ScheduleValue { value: 0.0, derivative: 0.0 },
            GeometricKind::Constant { value } => ScheduleValue { value, derivative: 0.0 },
            GeometricKind::AffineInverse { gamma0, beta1 } => ScheduleValue {
                value: gamma0 + beta1 / t,
                derivative: -beta1 / (t * t),
            },
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.value_and_derivative(t).value
    }

    /// Constant value, if β does not depend on time.
    pub fn constant_value(&self) -> Option<f64> {
        match self.kind {
            GeometricKind::Zero => Some(0.0),
            GeometricKind::Constant { value } => Some(value),
            GeometricKind::AffineInverse { gamma0, beta1 } if beta1 == 0.0 => Some(gamma0),
            GeometricKind::AffineInverse { .. } => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Diffusion bound σ∞
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiffusionKind {
    Zero,
    Constant { sigma0: f64 },
    /// σ∞(t) = σ0·t^(−q).
    Power { sigma0: f64, q: f64 },
    /// σ∞(t) = σ0·e^(−c·t).
    Exponential { sigma0: f64, c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSpec {
    #[serde(flatten)]
    pub kind: DiffusionKind,
    #[serde(default = "default_t0")]
    pub t0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DiffusionSpec", into = "DiffusionSpec")]
pub struct DiffusionSchedule {
    kind: DiffusionKind,
    t0: f64,
}

impl TryFrom<DiffusionSpec> for DiffusionSchedule {
    type Error = Error;

    fn try_from(spec: DiffusionSpec) -> Result<Self> {
        let DiffusionSpec { kind, t0 } = spec;
        if !(t0 >= 0.0) || !t0.is_finite() {
            return Err(invalid(format!("diffusion t0 must be ≥ 0, got {t0}")));
        }
        let ok = match kind {
            DiffusionKind::Zero => true,
            DiffusionKind::Constant { sigma0 } => sigma0 >= 0.0 && sigma0.is_finite(),
            DiffusionKind::Power { sigma0, q } => {
                sigma0 >= 0.0 && q >= 0.0 && sigma0.is_finite() && q.is_finite() && (q == 0.0 || t0 > 0.0)
            }
            DiffusionKind::Exponential { sigma0, c } => {
                sigma0 >= 0.0 && c > 0.0 && sigma0.is_finite() && c.is_finite()
            }
        };
        if !ok {
            return Err(invalid(format!("invalid diffusion schedule {kind:?} with t0 = {t0}")));
        }
        Ok(Self { kind, t0 })
    }
}

impl From<DiffusionSchedule> for DiffusionSpec {
    fn from(s: DiffusionSchedule) -> Self {
        DiffusionSpec { kind: s.kind, t0: s.t0 }
    }
}

impl DiffusionSchedule {
    pub fn zero(t0: f64) -> Self {
        Self { kind: DiffusionKind::Zero, t0 }
    }

    pub fn constant(sigma0: f64, t0: f64) -> Result<Self> {
        DiffusionSpec { kind: DiffusionKind::Constant { sigma0 }, t0 }.try_into()
    }

    pub fn power(sigma0: f64, q: f64, t0: f64) -> Result<Self> {
        DiffusionSpec { kind: DiffusionKind::Power { sigma0, q }, t0 }.try_into()
    }

    pub fn exponential(sigma0: f64, c: f64, t0: f64) -> Result<Self> {
        DiffusionSpec { kind: DiffusionKind::Exponential { sigma0, c }, t0 }.try_into()
    }

    pub fn kind(&self) -> &DiffusionKind {
        &self.kind
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn is_zero(&self) -> bool {
        match self.kind {
            DiffusionKind::Zero => true,
            DiffusionKind::Constant { sigma0 }
            | DiffusionKind::Power { sigma0, .. }
            | DiffusionKind::Exponential { sigma0, .. } => sigma0 == 0.0,
        }
    }

    pub fn eval(&self, t: f64) -> Result<ScheduleValue> {
        check_time(t, self.t0)?;
        Ok(self.value_and_derivative(t))
    }

    pub fn value_and_derivative(&self, t: f64) -> ScheduleValue {
        match self.kind {
            DiffusionKind::Zero => ScheduleValue { value: 0.0, derivative: 0.0 },
            DiffusionKind::Constant { sigma0 } => ScheduleValue { value: sigma0, derivative: 0.0 },
            DiffusionKind::Power { sigma0, q } => {
                let value = if q == 0.0 { sigma0 } else { sigma0 * t.powf(-q) };
                ScheduleValue { value, derivative: -q * value / t }
            }
            DiffusionKind::Exponential { sigma0, c } => {
                let value = sigma0 * (-c * t).exp();
                ScheduleValue { value, derivative: -c * value }
            }
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.value_and_derivative(t).value
    }
}

// ---------------------------------------------------------------------------
// Hypothesis checks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    /// Witnessing constants (c1, c2, m, t2, integral, …).
    pub constants: BTreeMap<String, f64>,
    /// Violating grid point on failure, or the threshold found on success.
    pub binding_t: Option<f64>,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, constants: BTreeMap::new(), binding_t: None, detail: detail.into() }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.constants.insert(key.into(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub grid: Vec<f64>,
    pub h_gamma: Verdict,
    /// `None` when β is the zero kind.
    pub h_beta: Option<Verdict>,
    pub h_gamma_prime: Verdict,
    pub noise_integrability: Verdict,
    pub sigma_nonincreasing: Verdict,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.h_gamma.pass
            && self.h_beta.as_ref().map_or(true, |v| v.pass)
            && self.h_gamma_prime.pass
            && self.noise_integrability.pass
            && self.sigma_nonincreasing.pass
    }
}

fn check_h_gamma(gamma: &DampingSchedule) -> Verdict {
    match gamma.capital_gamma(gamma.t0().max(f64::MIN_POSITIVE)) {
        Ok(g) if g.is_finite() => Verdict::new("H_gamma", true, "∫ 1/p converges").with("Gamma_t0", g),
        Ok(g) => Verdict::new("H_gamma", false, format!("Γ(t0) = {g}")),
        Err(e) => Verdict::new("H_gamma", false, e.to_string()),
    }
}

fn check_h_beta(gamma: &DampingSchedule, beta: &GeometricSchedule, grid: &[f64]) -> Option<Verdict> {
    if beta.is_zero() {
        return None;
    }
    let mut c1 = 0.0f64;
    let mut c2 = 0.0f64;
    for &t in grid {
        let b = beta.value_and_derivative(t);
        let g = gamma.value(t);
        let ratio = ((b.derivative - g * b.value + 1.0) / b.value).abs();
        if !(b.value > 0.0) || !ratio.is_finite() {
            let mut v = Verdict::new("H_beta", false, format!("β({t}) = {} not positive", b.value));
            v.binding_t = Some(t);
            return Some(v);
        }
        c1 = c1.max(b.value);
        c2 = c2.max(ratio);
    }
    Some(Verdict::new("H_beta", true, "β and |(β'−γβ+1)/β| bounded on the grid").with("c1", c1).with("c2", c2))
}

/// (H_γ') on a grid: m = sup γΓ from the first index t2 where γΓ < 3/2 holds onward.
pub fn check_h_gamma_prime(gamma: &DampingSchedule, grid: &[f64]) -> Verdict {
    let mut products = Vec::with_capacity(grid.len());
    for &t in grid {
        match gamma.capital_gamma(t) {
            Ok(g) => products.push(gamma.value(t) * g),
            Err(e) => {
                let mut v = Verdict::new("H_gamma_prime", false, e.to_string());
                v.binding_t = Some(t);
                return v;
            }
        }
    }
    // First index from which γΓ < 3/2 holds through the grid end.
    let mut start = products.len();
    while start > 0 && products[start - 1] < 1.5 {
        start -= 1;
    }
    if start == products.len() {
        let mut v = Verdict::new("H_gamma_prime", false, format!("γΓ = {} ≥ 3/2 at grid end", products[start - 1]));
        v.binding_t = grid.last().copied();
        return v;
    }
    let m = products[start..].iter().cloned().fold(f64::MIN, f64::max);
    let min = products.iter().cloned().fold(f64::MAX, f64::min);
    let mut v = Verdict::new("H_gamma_prime", true, "γΓ ≤ m < 3/2 from t2 onward")
        .with("m", m)
        .with("t2", grid[start])
        .with("min_gamma_Gamma", min);
    v.binding_t = Some(grid[start]);
    v
}

fn check_noise(sigma: &DiffusionSchedule, grid: &[f64], weight: &dyn Fn(f64) -> f64) -> Verdict {
    let g = |t: f64| weight(t) * sigma.value(t).powi(2);
    let hi = *grid.last().unwrap();
    if sigma.is_zero() {
        return Verdict::new("noise_integrability", true, "σ∞ ≡ 0").with("integral", 0.0).with("tail_bound", 0.0);
    }
    // Segment-wise on the grid keeps the quadrature honest for decaying g.
    let mut integral = 0.0;
    for w in grid.windows(2) {
        match integrate(g, w[0], w[1], QuadTol::relative(1e-10)) {
            Ok(r) => integral += r.value,
            Err(e) => return Verdict::new("noise_integrability", false, e.to_string()),
        }
    }
    let g_hi = g(hi);
    if g_hi == 0.0 {
        return Verdict::new("noise_integrability", true, "integrand vanishes at the horizon")
            .with("integral", integral)
            .with("tail_bound", 0.0);
    }
    let prev = grid[grid.len() - 2];
    let exponent = (g_hi / g(prev)).ln() / (hi / prev).ln();
    if exponent < -1.0 {
        let tail = g_hi * hi / (-exponent - 1.0);
        Verdict::new("noise_integrability", true, "local power-law tail is integrable")
            .with("integral", integral)
            .with("tail_bound", tail)
            .with("tail_exponent", exponent)
    } else {
        let mut v = Verdict::new(
            "noise_integrability",
            false,
            format!("m·σ∞² decays like t^{exponent:.4} at the horizon, not integrable"),
        )
        .with("integral", integral)
        .with("tail_exponent", exponent);
        v.binding_t = Some(hi);
        v
    }
}

fn check_sigma_monotone(sigma: &DiffusionSchedule, grid: &[f64]) -> Verdict {
    for w in grid.windows(2) {
        if sigma.value(w[1]) > sigma.value(w[0]) {
            let mut v = Verdict::new("sigma_nonincreasing", false, "σ∞ increases");
            v.binding_t = Some(w[1]);
            return v;
        }
    }
    Verdict::new("sigma_nonincreasing", true, "σ∞ nonincreasing on the grid")
}

/// Grid-based certification of the standing assumptions on (γ, β, σ∞).
/// `m_weight` is the time weight of the noise integrability condition.
pub fn check_hypotheses(
    gamma: &DampingSchedule,
    beta: &GeometricSchedule,
    sigma: &DiffusionSchedule,
    grid: &[f64],
    m_weight: &dyn Fn(f64) -> f64,
) -> Result<HypothesisReport> {
    if grid.len() < 100 {
        return Err(invalid(format!("hypothesis grid needs ≥ 100 points, got {}", grid.len())));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid[0] < gamma.t0() {
        return Err(invalid("hypothesis grid must be increasing and start at or after t0"));
    }
    Ok(HypothesisReport {
        grid: grid.to_vec(),
        h_gamma: check_h_gamma(gamma),
        h_beta: check_h_beta(gamma, beta, grid),
        h_gamma_prime: check_h_gamma_prime(gamma, grid),
        noise_integrability: check_noise(sigma, grid, m_weight),
        sigma_nonincreasing: check_sigma_monotone(sigma, grid),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        ((a - b) / b).abs() <= rel
    }

    #[test]
    fn eval_examples() {
        let g = DampingSchedule::power(4.0, 1.0, 1.0).unwrap();
        assert_eq!(g.eval(2.0).unwrap(), ScheduleValue { value: 2.0, derivative: -1.0 });
        let b = GeometricSchedule::affine_inverse(0.5, 1.0, 1.0).unwrap();
        assert_eq!(b.eval(4.0).unwrap(), ScheduleValue { value: 0.75, derivative: -1.0 / 16.0 });
        let s = DiffusionSchedule::exponential(1.0, 0.5, 1.0).unwrap();
        let v = s.eval(2.0).unwrap();
        assert!(close(v.value, (-1.0f64).exp(), 1e-15));
        assert!(close(v.derivative, -0.5 * (-1.0f64).exp(), 1e-15));
    }

    #[test]
    fn eval_before_t0_is_a_domain_error() {
        let g = DampingSchedule::power(4.0, 1.0, 1.0).unwrap();
        assert!(matches!(g.eval(0.5), Err(Error::Domain { .. })));
        let tab = DampingSchedule::tabulate(|t| 4.0 / t, 1.0, 10.0, 50).unwrap();
        assert!(matches!(tab.eval(11.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn construction_rejects_bad_parameters() {
        assert!(DampingSchedule::power(4.0, 0.5, 0.0).is_err());
        assert!(DampingSchedule::power(-1.0, 1.0, 1.0).is_err());
        assert!(DampingSchedule::table(vec![(1.0, 1.0), (1.0, 0.5)]).is_err());
        assert!(DampingSchedule::table(vec![(1.0, 1.0), (2.0, -0.5)]).is_err());
        assert!(GeometricSchedule::affine_inverse(0.0, 1.0, 1.0).is_err());
        assert!(DiffusionSchedule::exponential(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn p_examples() {
        let g = DampingSchedule::power(4.0, 1.0, 1.0).unwrap();
        assert!(close(g.p(2.0).unwrap(), 16.0, 1e-14));
        let c = DampingSchedule::constant(2.0, 0.0).unwrap();
        assert!(close(c.p(3.0).unwrap(), 6f64.exp(), 1e-14));
        let tab = DampingSchedule::tabulate(|t| 4.0 / t, 1.0, 100.0, 400).unwrap();
        assert!((tab.p(2.0).unwrap() - 16.0).abs() < 1e-6);
        assert_eq!(g.p(1.0).unwrap(), 1.0);
    }

    #[test]
    fn gamma_examples() {
        let g = DampingSchedule::power(4.0, 1.0, 1.0).unwrap();
        assert!(close(g.capital_gamma(8.0).unwrap(), 8.0 / 3.0, 1e-15));
        let c = DampingSchedule::constant(0.5, 1.0).unwrap();
        assert_eq!(c.capital_gamma(17.0).unwrap(), 2.0);
        assert!(close(c.capital_gamma_with(17.0, Evaluation::Quadrature).unwrap(), 2.0, 1e-8));
    }

    #[test]
    fn gamma_hypothesis_failure_is_reported() {
        let g = DampingSchedule::power(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(g.capital_gamma(2.0), Err(Error::Hypothesis { .. })));
        let z = DampingSchedule::constant(0.0, 1.0).unwrap();
        assert!(matches!(z.capital_gamma_with(2.0, Evaluation::Quadrature), Err(Error::Hypothesis { .. })));
    }

    #[test]
    fn lambda_examples() {
        let g = DampingSchedule::power(3.0, 1.0, 1.0).unwrap();
        assert!(close(g.lambda_c(0.25, 10.0).unwrap(), 0.4, 1e-14));
        assert_eq!(g.default_lambda_constant(), Some(0.25));
        let c = DampingSchedule::constant(1.0, 0.0).unwrap();
        assert!(close(c.lambda_c_with(1.0, 40.0, Evaluation::Quadrature).unwrap(), 1.0, 1e-10));
        assert!(g.lambda_c(0.0, 2.0).is_err());
    }

    #[test]
    fn theta_examples() {
        let g = DampingSchedule::power(4.0, 1.0, 1.0).unwrap();
        assert!(close(g.theta(7.0).unwrap(), 48.0 / 6.0, 1e-14));
        assert_eq!(g.theta(1.0).unwrap(), 0.0);
        let r = DampingSchedule::power(1.0, 0.5, 1.0).unwrap();
        assert_eq!(r.theta(1.0).unwrap(), 0.0);
    }

    #[test]
    fn hypothesis_examples() {
        let grid = log_grid(1.0, 1e4, 200);
        let gamma = DampingSchedule::power(4.0, 1.0, 1.0).unwrap();
        let beta = GeometricSchedule::affine_inverse(0.5, 1.0, 1.0).unwrap();
        let sigma = DiffusionSchedule::power(0.1, 1.6, 1.0).unwrap();
        let rep = check_hypotheses(&gamma, &beta, &sigma, &grid, &|t| t * t).unwrap();
        assert!(rep.h_gamma_prime.pass);
        assert!(close(rep.h_gamma_prime.constants["m"], 4.0 / 3.0, 1e-12));
        let hb = rep.h_beta.as_ref().unwrap();
        assert!(hb.pass);
        assert!(close(hb.constants["c1"], 1.5, 1e-15));
        assert!(rep.noise_integrability.pass);
        assert!(rep.all_pass());

        let slow = DiffusionSchedule::power(0.1, 0.4, 1.0).unwrap();
        let rep = check_hypotheses(&gamma, &GeometricSchedule::zero(1.0), &slow, &grid, &|t| t * t).unwrap();
        assert!(rep.h_beta.is_none());
        assert!(!rep.noise_integrability.pass);
        assert!(close(rep.noise_integrability.constants["tail_exponent"], 1.2, 1e-9));
    }

    #[test]
    fn hypothesis_grid_precondition() {
        let gamma = DampingSchedule::power(4.0, 1.0, 1.0).unwrap();
        let r = check_hypotheses(
            &gamma,
            &GeometricSchedule::zero(1.0),
            &DiffusionSchedule::zero(1.0),
            &log_grid(1.0, 10.0, 20),
            &|_| 1.0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn serde_round_trip_keeps_validation() {
        let g = DampingSchedule::power(4.0, 1.0, 1.0).unwrap();
        let s = toml::to_string(&g).unwrap();
        assert!(s.contains("kind = \"power\""));
        let back: DampingSchedule = toml::from_str(&s).unwrap();
        assert_eq!(back, g);
        let bad = "kind = \"power\"\nalpha = 4.0\nr = 2.0\nt0 = 1.0\n";
        assert!(toml::from_str::<DampingSchedule>(bad).is_err());
    }
}
