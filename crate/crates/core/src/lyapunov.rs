//! Coefficient quadruples (a, b, c, d), the six-relation system they must
//! satisfy, and the Lyapunov energies evaluated along trajectories.

use crate::error::{invalid, Error, Result};
use crate::problems::Objective;
use crate::schedules::{check_h_gamma_prime, DampingSchedule, DiffusionSchedule, GeometricSchedule};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Equalities pass when |residual| ≤ EQ_TOL·(1 + largest term magnitude).
pub const EQ_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Cor1,
    Corabcdd,
    Custom,
}

/// Values and first derivatives of a, b, c, d at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadrupleValues {
    pub a: f64,
    pub da: f64,
    pub b: f64,
    pub db: f64,
    pub c: f64,
    pub dc: f64,
    pub d: f64,
    pub dd: f64,
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Coefficients {
    Cor1 { alpha: f64, gamma0: f64, beta1: f64, b: f64 },
    Corabcdd { gamma: DampingSchedule, beta: f64, b: f64 },
    Custom { a: ScalarFn, b: ScalarFn, c: ScalarFn, d: ScalarFn },
}

#[derive(Clone)]
pub struct CoefficientQuadruple {
    coeffs: Coefficients,
    t_hat: f64,
}

impl fmt::Debug for CoefficientQuadruple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("CoefficientQuadruple");
        s.field("provenance", &self.provenance()).field("t_hat", &self.t_hat);
        match &self.coeffs {
            Coefficients::Cor1 { alpha, gamma0, beta1, b } => {
                s.field("alpha", alpha).field("gamma0", gamma0).field("beta1", beta1).field("b", b)
            }
            Coefficients::Corabcdd { gamma, beta, b } => s.field("gamma", gamma).field("beta", beta).field("b", b),
            Coefficients::Custom { .. } => &mut s,
        };
        s.finish()
    }
}

/// Sum of power terms Σ coef·t^power, the file format of custom quadruples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerTerms(pub Vec<[f64; 2]>);

impl PowerTerms {
    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().map(|[coef, power]| if *power == 0.0 { *coef } else { coef * t.powf(*power) }).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomQuadrupleSpec {
    #[serde(default)]
    pub a: PowerTerms,
    #[serde(default)]
    pub b: PowerTerms,
    #[serde(default)]
    pub c: PowerTerms,
    #[serde(default)]
    pub d: PowerTerms,
    pub t_hat: f64,
}

fn central_difference(f: &ScalarFn, t: f64) -> f64 {
    let h = 1e-5 * t.abs().max(1e-3);
    (f(t + h) - f(t - h)) / (2.0 * h)
}

impl CoefficientQuadruple {
    /// The quadruple for γ = α/t, β = γ0 + β1/t, with c = t and constant b.
    pub fn cor1(alpha: f64, gamma0: f64, beta1: f64, b: f64) -> Result<Self> {
        if !(alpha > 3.0) || !(gamma0 > 0.0) || !(beta1 >= 0.0) {
            return Err(invalid(format!("cor1 needs α > 3, γ0 > 0, β1 ≥ 0; got ({alpha}, {gamma0}, {beta1})")));
        }
        if !(b > 2.0 && b < alpha - 1.0) {
            return Err(invalid(format!("cor1 needs b in (2, α−1) = (2, {}), got {b}", alpha - 1.0)));
        }
        Ok(Self::cor1_unchecked(alpha, gamma0, beta1, b))
    }

    /// Same construction without the range check on b, for probing
    /// mutated quadruples.
    pub fn cor1_unchecked(alpha: f64, gamma0: f64, beta1: f64, b: f64) -> Self {
        let root = 0.5 * (alpha * gamma0 + (alpha * alpha * gamma0 * gamma0 + 4.0 * beta1 * (alpha + 1.0)).sqrt());
        let t_hat = (1.01 * root).max(f64::MIN_POSITIVE);
        CoefficientQuadruple { coeffs: Coefficients::Cor1 { alpha, gamma0, beta1, b }, t_hat }
    }

    /// The quadruple for decreasing γ and constant β > 0, with c = Γ. `grid`
    /// is where (H_γ') and the system are checked; t_hat is the first grid
    /// point from which all six relations hold.
    pub fn corabcdd(gamma: &DampingSchedule, beta: f64, b: f64, grid: &[f64]) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(invalid(format!("corabcdd needs β > 0, got {beta}")));
        }
        let verdict = check_h_gamma_prime(gamma, grid);
        if !verdict.pass {
            return Err(Error::Hypothesis { name: "H_gamma_prime", detail: verdict.detail });
        }
        // t2 is free: take the first grid point from which γΓ stays below
        // 1 + b/2, so that b > 2(m − 1) with m the supremum from there on.
        let products: Vec<f64> =
            grid.iter().map(|&t| Ok(gamma.value(t) * gamma.capital_gamma(t)?)).collect::<Result<_>>()?;
        let bound = (1.0 + b / 2.0).min(1.5);
        let mut start = products.len();
        while start > 0 && products[start - 1] < bound {
            start -= 1;
        }
        if !(b < 1.0) || start == products.len() {
            return Err(invalid(format!(
                "corabcdd needs b in (2(m−1), 1) with m = sup γΓ past some t2; γΓ never stays below 1 + b/2 for b = {b}"
            )));
        }
        let t2 = grid[start];
        // t1: first grid point with β ≤ 1/γ(t1), kept strict so 1 − βγ > 0.
        let t1 = grid
            .iter()
            .copied()
            .find(|&t| t >= t2 && beta * gamma.value(t) < 1.0)
            .ok_or_else(|| Error::Hypothesis { name: "beta_gamma", detail: "β·γ(t) ≥ 1 on the whole grid".into() })?;
        let mut q = CoefficientQuadruple { coeffs: Coefficients::Corabcdd { gamma: gamma.clone(), beta, b }, t_hat: t1 };
        let beta_sched = GeometricSchedule::constant(beta, gamma.t0())?;
        let sub: Vec<f64> = grid.iter().copied().filter(|&t| t >= t1).collect();
        let report = verify_system(&q, gamma, &beta_sched, &sub);
        q.t_hat = report.t_hat.ok_or_else(|| Error::Hypothesis {
            name: "system",
            detail: "no grid point from which all six relations hold".into(),
        })?;
        Ok(q)
    }

    /// User-supplied coefficients; derivatives by central differences.
    pub fn custom(a: ScalarFn, b: ScalarFn, c: ScalarFn, d: ScalarFn, t_hat: f64) -> Self {
        CoefficientQuadruple { coeffs: Coefficients::Custom { a, b, c, d }, t_hat }
    }

    pub fn from_spec(spec: &CustomQuadrupleSpec) -> Self {
        let wrap = |p: &PowerTerms| -> ScalarFn {
            let p = p.clone();
            Arc::new(move |t| p.eval(t))
        };
        Self::custom(wrap(&spec.a), wrap(&spec.b), wrap(&spec.c), wrap(&spec.d), spec.t_hat)
    }

    pub fn provenance(&self) -> Provenance {
        match self.coeffs {
            Coefficients::Cor1 { .. } => Provenance::Cor1,
            Coefficients::Corabcdd { .. } => Provenance::Corabcdd,
            Coefficients::Custom { .. } => Provenance::Custom,
        }
    }

    pub fn t_hat(&self) -> f64 {
        self.t_hat
    }

    pub fn eval(&self, t: f64) -> Result<QuadrupleValues> {
        match &self.coeffs {
            &Coefficients::Cor1 { alpha, gamma0, beta1, b } => {
                let n = t * t - b * gamma0 * t - b * beta1;
                let dn = t * t - alpha * gamma0 * t - beta1 * (alpha + 1.0);
                let (n1, dn1) = (2.0 * t - b * gamma0, 2.0 * t - alpha * gamma0);
                let a = t * t * n / dn;
                let da = ((2.0 * t * n + t * t * n1) * dn - t * t * n * dn1) / (dn * dn);
                let d = b * (alpha - 1.0 - b);
                Ok(QuadrupleValues { a, da, b, db: 0.0, c: t, dc: 1.0, d, dd: 0.0 })
            }
            Coefficients::Corabcdd { gamma, beta, b } => {
                let (beta, b) = (*beta, *b);
                let g = gamma.eval(t)?;
                let cap = gamma.capital_gamma(t)?;
                let dcap = g.value * cap - 1.0;
                let w = 1.0 - beta * g.value;
                let a = cap * (cap - beta * b) / w;
                let da = (dcap * (2.0 * cap - beta * b) * w + beta * g.derivative * cap * (cap - beta * b)) / (w * w);
                Ok(QuadrupleValues { a, da, b, db: 0.0, c: cap, dc: dcap, d: b * (1.0 - b), dd: 0.0 })
            }
            Coefficients::Custom { a, b, c, d } => Ok(QuadrupleValues {
                a: a(t),
                da: central_difference(a, t),
                b: b(t),
                db: central_difference(b, t),
                c: c(t),
                dc: central_difference(c, t),
                d: d(t),
                dd: central_difference(d, t),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    LessEqualZero,
    EqualZero,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    /// 1-based position in the system.
    pub index: usize,
    pub relation: Relation,
    /// Holds at every grid point.
    pub pass: bool,
    /// Number of grid points where it fails.
    pub violations: usize,
    /// Largest value (inequalities) or largest relative residual (equalities).
    pub worst_margin: f64,
    pub binding_t: f64,
    /// (t, margin) per grid point; margins are values for inequalities and
    /// |residual|/(1 + scale) for equalities.
    pub margins: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemReport {
    pub provenance: Provenance,
    pub conditions: Vec<ConditionReport>,
    /// Smallest grid time from which all six relations hold through the end.
    pub t_hat: Option<f64>,
    /// All six relations hold on the whole grid.
    pub all_pass: bool,
}

impl SystemReport {
    /// Index of the first condition with the most violations, if any fail.
    pub fn binding_condition(&self) -> Option<usize> {
        self.conditions.iter().filter(|c| !c.pass).max_by_key(|c| (c.violations, usize::MAX - c.index)).map(|c| c.index)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Evaluates the six relations; each entry is (value, scale) where scale
/// is the largest term magnitude.
fn relations(q: &QuadrupleValues, gamma: f64, beta: f64, dbeta: f64) -> [(f64, f64); 6] {
    let QuadrupleValues { a, da, b, db, c, dc, d, dd } = *q;
    let max = |xs: &[f64]| xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let t3 = [-a * gamma * beta, a * dbeta, a, -c * c, b * c * beta];
    let t5 = [db * c, b * b, b * dc, -b * c * gamma, d];
    [
        (da - b * c, max(&[da, b * c])),
        (-a * beta, (a * beta).abs()),
        (t3.iter().sum(), max(&t3)),
        (db * b + dd / 2.0, max(&[db * b, dd / 2.0])),
        (t5.iter().sum(), max(&t5)),
        (c * (b + dc - c * gamma), max(&[c * b, c * dc, c * c * gamma])),
    ]
}

const RELATIONS: [Relation; 6] = [
    Relation::LessEqualZero,
    Relation::LessEqualZero,
    Relation::EqualZero,
    Relation::LessEqualZero,
    Relation::EqualZero,
    Relation::LessEqualZero,
];

/// Checks all six relations at every grid time.
pub fn verify_system(
    q: &CoefficientQuadruple,
    gamma: &DampingSchedule,
    beta: &GeometricSchedule,
    grid: &[f64],
) -> SystemReport {
    let mut margins: Vec<Vec<(f64, f64)>> = vec![Vec::with_capacity(grid.len()); 6];
    let mut ok: Vec<Vec<bool>> = vec![Vec::with_capacity(grid.len()); 6];
    for &t in grid {
        let values = q.eval(t);
        let g = gamma.value(t);
        let bt = beta.value_and_derivative(t);
        for i in 0..6 {
            let (m, pass) = match &values {
                Err(_) => (f64::NAN, false),
                Ok(v) => {
                    let (value, scale) = relations(v, g, bt.value, bt.derivative)[i];
                    match RELATIONS[i] {
                        Relation::LessEqualZero => (value, value <= EQ_TOL * (1.0 + scale)),
                        Relation::EqualZero => {
                            let rel = value.abs() / (1.0 + scale);
                            (rel, rel <= EQ_TOL)
                        }
                    }
                }
            };
            margins[i].push((t, m));
            ok[i].push(pass && m.is_finite());
        }
    }
    let mut start = grid.len();
    while start > 0 && (0..6).all(|i| ok[i][start - 1]) {
        start -= 1;
    }
    let conditions: Vec<ConditionReport> = (0..6)
        .map(|i| {
            let violations = ok[i].iter().filter(|p| !**p).count();
            let (binding_t, worst_margin) = margins[i]
                .iter()
                .copied()
                .fold((f64::NAN, f64::NEG_INFINITY), |acc, (t, m)| if !(m <= acc.1) { (t, m) } else { acc });
            ConditionReport {
                index: i + 1,
                relation: RELATIONS[i],
                pass: violations == 0,
                violations,
                worst_margin,
                binding_t,
                margins: std::mem::take(&mut margins[i]),
            }
        })
        .collect();
    SystemReport {
        provenance: q.provenance(),
        all_pass: !grid.is_empty() && conditions.iter().all(|c| c.pass),
        conditions,
        t_hat: if start < grid.len() { Some(grid[start]) } else { None },
    }
}

/// a(f(x+βv) − min f) + ½‖b(x−x⋆) + cv‖² + (d/2)‖x−x⋆‖².
pub fn energy_general(
    q: &CoefficientQuadruple,
    beta: f64,
    t: f64,
    x: &[f64],
    v: &[f64],
    objective: &Objective,
    x_star: &[f64],
) -> Result<f64> {
    if t < q.t_hat() {
        return Err(Error::Domain { t, lo: q.t_hat(), hi: f64::INFINITY });
    }
    let k = q.eval(t)?;
    let shifted: Vec<f64> = x.iter().zip(v).map(|(x, v)| x + beta * v).collect();
    let mut mixed = 0.0;
    let mut dist = 0.0;
    for i in 0..x.len() {
        let e = x[i] - x_star[i];
        let m = k.b * e + k.c * v[i];
        mixed += m * m;
        dist += e * e;
    }
    Ok(k.a * objective.gap(&shifted) + 0.5 * mixed + 0.5 * k.d * dist)
}

/// f(x+βv) − min f + ½‖√μ(x−x⋆) + v‖², x⋆ the unique minimizer.
pub fn energy_strongly_convex(mu: f64, beta: f64, x: &[f64], v: &[f64], objective: &Objective) -> Result<f64> {
    if !(mu > 0.0) || objective.strong_mu() < mu {
        return Err(invalid(format!("μ = {mu} must be positive and ≤ the objective's modulus {}", objective.strong_mu())));
    }
    if !(beta >= 0.0 && beta <= 0.5 / mu.sqrt()) {
        return Err(invalid(format!("β = {beta} outside [0, 1/(2√μ)]")));
    }
    let x_star = objective.project_solution(x);
    let shifted: Vec<f64> = x.iter().zip(v).map(|(x, v)| x + beta * v).collect();
    let s = mu.sqrt();
    let kinetic: f64 = (0..x.len()).map(|i| (s * (x[i] - x_star[i]) + v[i]).powi(2)).sum();
    Ok(objective.gap(&shifted) + 0.5 * kinetic)
}

/// Θ(t) = max{e^{−(√μ/4)(t−t0)}, σ∞²((t+t0)/2)}.
pub fn theta_envelope(mu: f64, sigma: &DiffusionSchedule, t0: f64, t: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(invalid(format!("μ must be positive, got {mu}")));
    }
    if !(t >= t0) {
        return Err(Error::Domain { t, lo: t0, hi: f64::INFINITY });
    }
    Ok((-(mu.sqrt() / 4.0) * (t - t0)).exp().max(sigma.value(0.5 * (t + t0)).powi(2)))
}

/// Energy attached to a simulation.
#[derive(Debug, Clone)]
pub enum EnergyEvaluator {
    General { quadruple: CoefficientQuadruple, x_star: Vec<f64> },
    StronglyConvex { mu: f64, beta: f64 },
}

impl EnergyEvaluator {
    /// Earliest time at which the energy is defined.
    pub fn t_min(&self) -> f64 {
        match self {
            EnergyEvaluator::General { quadruple, .. } => quadruple.t_hat(),
            EnergyEvaluator::StronglyConvex { .. } => f64::NEG_INFINITY,
        }
    }

    pub fn evaluate(&self, t: f64, beta_t: f64, x: &[f64], v: &[f64], objective: &Objective) -> Result<f64> {
        match self {
            EnergyEvaluator::General { quadruple, x_star } => {
                energy_general(quadruple, beta_t, t, x, v, objective, x_star)
            }
            EnergyEvaluator::StronglyConvex { mu, beta } => energy_strongly_convex(*mu, *beta, x, v, objective),
        }
    }
}
