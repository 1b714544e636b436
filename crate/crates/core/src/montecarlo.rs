//! Parallel path ensembles, expectation estimates, decay-rate fits and
//! per-path almost-sure diagnostics.

use crate::dynamics::{simulate_path, Integrator, Record, SdeConfig, Trajectory};
use crate::error::{invalid, Result};
use crate::lyapunov::EnergyEvaluator;
use crate::schedules::{DampingSchedule, DerivedQuantity};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Ensemble fields, in CSV column order.
pub const FIELDS: [&str; 7] = ["f_gap", "speed2", "gap_speed", "grad2", "grad_shift2", "dist2", "energy"];

fn field(r: &Record, name: &str) -> Option<f64> {
    Some(match name {
        "f_gap" => r.f_gap,
        "speed2" => r.speed2,
        "gap_speed" => r.f_gap + r.speed2,
        "grad2" => r.grad2,
        "grad_shift2" => r.grad_shift2,
        "dist2" => r.dist2,
        "energy" => return r.energy,
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Summary {
    /// Sequential reduction in input order.
    fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary { mean: f64::NAN, stderr: f64::NAN, q10: f64::NAN, q50: f64::NAN, q90: f64::NAN };
        }
        // Shifted by the first value: identical inputs give exactly zero spread.
        let shift = values[0];
        let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n as f64;
        let stderr = if n >= 2 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Summary { mean, stderr, q10: quantile(&sorted, 0.1), q50: quantile(&sorted, 0.5), q90: quantile(&sorted, 0.9) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    /// Paths contributing to the statistics (divergent ones excluded).
    pub n_paths: usize,
    pub divergent_paths: Vec<u64>,
    /// One entry per field of `FIELDS` present in the trajectories.
    pub fields: Vec<(String, Vec<Summary>)>,
}

impl EnsembleStats {
    pub fn field(&self, name: &str) -> Option<&[Summary]> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, s)| s.as_slice())
    }

    /// (t, mean) series of a field.
    pub fn mean_series(&self, name: &str) -> Option<Vec<(f64, f64)>> {
        self.field(name).map(|s| self.times.iter().zip(s).map(|(t, s)| (*t, s.mean)).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,n");
        for (name, _) in &self.fields {
            for stat in ["mean", "stderr", "q10", "q50", "q90"] {
                let _ = write!(out, ",{name}_{stat}");
            }
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{t},{}", self.n_paths);
            for (_, s) in &self.fields {
                let s = s[i];
                let _ = write!(out, ",{},{},{},{},{}", s.mean, s.stderr, s.q10, s.q50, s.q90);
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub stats: EnsembleStats,
    /// All trajectories in path order when retention was requested.
    pub paths: Option<Vec<Trajectory>>,
}

fn aggregate(trajs: &[Trajectory]) -> Result<EnsembleStats> {
    let divergent_paths: Vec<u64> = trajs.iter().filter(|t| t.diverged()).map(|t| t.path_id).collect();
    let good: Vec<&Trajectory> = trajs.iter().filter(|t| !t.diverged()).collect();
    let template = good.first().copied().or(trajs.first()).ok_or_else(|| invalid("empty ensemble"))?;
    let times = template.times();
    let with_energy = template.has_energy();
    let mut fields = Vec::new();
    for name in FIELDS {
        if name == "energy" && !with_energy {
            continue;
        }
        let summaries = (0..times.len())
            .map(|i| {
                let values: Vec<f64> = good.iter().map(|tr| field(&tr.records[i], name).unwrap_or(f64::NAN)).collect();
                Summary::of(&values)
            })
            .collect();
        fields.push((name.to_string(), summaries));
    }
    Ok(EnsembleStats { times, n_paths: good.len(), divergent_paths, fields })
}

/// Simulates paths 0..n on the current rayon pool. Results do not depend on
/// the number of workers: paths are collected in id order and reduced
/// sequentially.
pub fn run_ensemble(
    cfg: &SdeConfig,
    n: usize,
    integrator: Integrator,
    energy: Option<&EnergyEvaluator>,
    keep_paths: bool,
) -> Result<Ensemble> {
    if n == 0 {
        return Err(invalid("ensemble needs at least one path"));
    }
    cfg.validate()?;
    let trajs: Vec<Trajectory> = (0..n as u64)
        .into_par_iter()
        .map(|id| simulate_path(cfg, id, integrator, energy))
        .collect::<Result<Vec<_>>>()?;
    let stats = aggregate(&trajs)?;
    if !stats.divergent_paths.is_empty() {
        eprintln!("warning: {} divergent path(s) excluded from the means", stats.divergent_paths.len());
    }
    Ok(Ensemble { stats, paths: keep_paths.then_some(trajs) })
}

/// `run_ensemble` on a dedicated pool of `threads` workers.
pub fn run_ensemble_with_threads(
    cfg: &SdeConfig,
    n: usize,
    integrator: Integrator,
    energy: Option<&EnergyEvaluator>,
    keep_paths: bool,
    threads: usize,
) -> Result<Ensemble> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    pool.install(|| run_ensemble(cfg, n, integrator, energy, keep_paths))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    /// log y against log t.
    Power,
    /// log y against t.
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub kind: FitKind,
    pub slope: f64,
    pub intercept: f64,
    pub residual_se: f64,
    pub window: (f64, f64),
    pub n_points: usize,
    /// Points in the window dropped because y ≤ 0 (or t ≤ 0 for power fits).
    pub excluded: usize,
}

impl RateFit {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit serializes")
    }
}

fn least_squares_fit(kind: FitKind, series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let (lo, hi) = window;
    let mut excluded = 0;
    let mut pts = Vec::new();
    for &(t, y) in series.iter().filter(|(t, _)| *t >= lo && *t <= hi) {
        let ok = y > 0.0 && y.is_finite() && (kind == FitKind::Exponential || t > 0.0);
        if !ok {
            excluded += 1;
            continue;
        }
        let u = if kind == FitKind::Power { t.ln() } else { t };
        pts.push((u, y.ln()));
    }
    let n = pts.len();
    if n < 5 {
        return Err(invalid(format!("rate fit needs ≥ 5 usable points in [{lo}, {hi}], got {n}")));
    }
    let mu = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mu).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mu) * (p.1 - mv)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("rate fit window has no spread in t"));
    }
    let slope = sxy / sxx;
    let intercept = mv - slope * mu;
    let ssr: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(RateFit { kind, slope, intercept, residual_se: (ssr / (n - 2) as f64).sqrt(), window, n_points: n, excluded })
}

/// OLS of log y on log t over the window.
pub fn estimate_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    least_squares_fit(FitKind::Power, series, window)
}

/// OLS of log y on t over the window; the slope is in 1/time units.
pub fn estimate_exponential_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    least_squares_fit(FitKind::Exponential, series, window)
}

/// Default window: the last decade [T/10, T].
pub fn last_decade(series: &[(f64, f64)]) -> (f64, f64) {
    let t_end = series.last().map_or(0.0, |p| p.0);
    (t_end / 10.0, t_end)
}

/// Smallest C with y(t) ≤ C·envelope(t) on the window.
pub fn envelope_fit(series: &[(f64, f64)], envelope: &dyn Fn(f64) -> f64, window: (f64, f64)) -> Result<f64> {
    let mut c = f64::NEG_INFINITY;
    let mut any = false;
    for &(t, y) in series.iter().filter(|(t, _)| *t >= window.0 && *t <= window.1) {
        let e = envelope(t);
        if !(e > 0.0) {
            return Err(invalid(format!("envelope not positive at t = {t}")));
        }
        c = c.max(y / e);
        any = true;
    }
    if !any {
        return Err(invalid("no points in the envelope window"));
    }
    Ok(c)
}

/// Time weight g(t) of the almost-sure diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "weight", rename_all = "snake_case")]
pub enum Weight {
    Derived(DerivedQuantity),
    Power { p: f64 },
    Constant { value: f64 },
}

impl Weight {
    pub fn series(&self, gamma: &DampingSchedule, times: &[f64]) -> Result<Vec<f64>> {
        match self {
            Weight::Derived(DerivedQuantity::Theta) => gamma.theta_series(times),
            Weight::Derived(q) => times.iter().map(|&t| q.evaluate(gamma, t)).collect(),
            Weight::Power { p } => Ok(times.iter().map(|t| t.powf(*p)).collect()),
            Weight::Constant { value } => Ok(vec![*value; times.len()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsDiagnostics {
    pub path_id: u64,
    /// Trapezoid ∫ g(f_gap + speed2) over [t_w, T].
    pub tail_integral: f64,
    pub t_w: f64,
    /// (t, g(t)·(f_gap + speed2)).
    pub scaled: Vec<(f64, f64)>,
    /// sup of the scaled series over [T/10, T].
    pub tail_sup: f64,
    /// sup over [T/10, T/2] and over [T/2, T].
    pub sup_early: f64,
    pub sup_late: f64,
    /// sup_late ≤ sup_early/2: the finite-horizon proxy for g·(…) = o(1).
    pub o_proxy_pass: bool,
    /// (t, dist(X(t), S)).
    pub distance: Vec<(f64, f64)>,
}

impl AsDiagnostics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diagnostics serialize")
    }
}

fn sup_on(series: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    series.iter().filter(|(t, _)| *t >= lo && *t <= hi).fold(0.0, |m, p| m.max(p.1))
}

fn trapezoid(series: &[(f64, f64)]) -> f64 {
    series.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
}

/// Per-path diagnostics; `tail_fraction` sets t_w = tail_fraction·T.
pub fn as_diagnostics(
    traj: &Trajectory,
    weight: &Weight,
    gamma: &DampingSchedule,
    tail_fraction: f64,
) -> Result<AsDiagnostics> {
    if traj.records.is_empty() {
        return Err(invalid("trajectory has no records"));
    }
    let times = traj.times();
    let g = weight.series(gamma, &times)?;
    let scaled: Vec<(f64, f64)> =
        traj.records.iter().zip(&g).map(|(r, w)| (r.t, w * (r.f_gap + r.speed2))).collect();
    let t_end = *times.last().unwrap();
    let t_w = tail_fraction * t_end;
    let tail: Vec<(f64, f64)> = scaled.iter().copied().filter(|(t, _)| *t >= t_w).collect();
    let sup_early = sup_on(&scaled, t_end / 10.0, t_end / 2.0);
    let sup_late = sup_on(&scaled, t_end / 2.0, t_end);
    Ok(AsDiagnostics {
        path_id: traj.path_id,
        tail_integral: trapezoid(&tail),
        t_w,
        tail_sup: sup_on(&scaled, t_end / 10.0, t_end),
        sup_early,
        sup_late,
        o_proxy_pass: sup_late <= 0.5 * sup_early,
        scaled,
        distance: traj.records.iter().map(|r| (r.t, r.dist2.sqrt())).collect(),
    })
}

/// Σ |y_{i+1} − y_i|.
pub fn total_variation(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// (t, ‖X(t) − x_ref‖) from the stored checkpoint positions.
pub fn distance_series(traj: &Trajectory, x_ref: &[f64]) -> Vec<(f64, f64)> {
    traj.records
        .iter()
        .zip(&traj.positions)
        .map(|(r, x)| (r.t, x.iter().zip(x_ref).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()))
        .collect()
}

/// Index of the median path by terminal f_gap, among non-divergent paths.
pub fn median_path(trajs: &[Trajectory]) -> Option<usize> {
    let mut idx: Vec<usize> = (0..trajs.len()).filter(|&i| !trajs[i].diverged()).collect();
    idx.sort_by(|&a, &b| {
        let ga = trajs[a].records.last().map_or(f64::NAN, |r| r.f_gap);
        let gb = trajs[b].records.last().map_or(f64::NAN, |r| r.f_gap);
        ga.total_cmp(&gb).then(a.cmp(&b))
    });
    idx.get(idx.len().saturating_sub(1) / 2).copied()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{NoiseKind, NoiseModel};
    use crate::problems::Objective;
    use crate::schedules::{log_grid, DiffusionSchedule, GeometricSchedule};

    fn cfg(sigma: f64) -> SdeConfig {
        SdeConfig {
            t0: 1.0,
            t_end: 20.0,
            h: 0.01,
            gamma: DampingSchedule::power(3.0, 1.0, 1.0).unwrap(),
            beta: GeometricSchedule::constant(0.2, 1.0).unwrap(),
            noise: NoiseModel::new(NoiseKind::Isotropic, DiffusionSchedule::power(sigma, 1.0, 1.0).unwrap(), 2).unwrap(),
            objective: Objective::quadratic(vec![1.0, 4.0], vec![0.0, 0.0], 0.0).unwrap(),
            x0: vec![1.0, -1.0],
            v0: vec![0.0, 0.0],
            master_seed: 9,
            checkpoints: log_grid(1.0, 20.0, 20),
        }
    }

    #[test]
    fn single_path_ensemble_reproduces_simulate_path() {
        let c = cfg(0.3);
        let e = run_ensemble(&c, 1, Integrator::Isihd, None, true).unwrap();
        let t = simulate_path(&c, 0, Integrator::Isihd, None).unwrap();
        assert_eq!(e.paths.unwrap()[0], t);
        assert_eq!(e.stats.field("f_gap").unwrap()[5].mean, t.records[5].f_gap);
    }

    #[test]
    fn noiseless_paths_agree() {
        let e = run_ensemble(&cfg(0.0), 8, Integrator::Isihd, None, false).unwrap();
        let s = e.stats.field("gap_speed").unwrap();
        assert!(s.iter().all(|s| s.stderr == 0.0));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let c = cfg(0.5);
        let one = run_ensemble_with_threads(&c, 16, Integrator::Isihd, None, false, 1).unwrap();
        let four = run_ensemble_with_threads(&c, 16, Integrator::Isihd, None, false, 4).unwrap();
        assert_eq!(one.stats.to_csv(), four.stats.to_csv());
    }

    #[test]
    fn rate_examples() {
        let ts = log_grid(1.0, 100.0, 20);
        let pl: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 100.0 * t.powi(-2))).collect();
        assert!((estimate_rate(&pl, (1.0, 100.0)).unwrap().slope + 2.0).abs() < 1e-6);
        let flat: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 3.0)).collect();
        assert!(estimate_rate(&flat, (1.0, 100.0)).unwrap().slope.abs() < 1e-12);

        let lin: Vec<f64> = (0..=40).map(|i| i as f64).collect();
        let ex: Vec<(f64, f64)> = lin.iter().map(|&t| (t, (-t / 4.0).exp())).collect();
        let power = estimate_rate(&ex, (0.0, 40.0)).unwrap();
        let expo = estimate_exponential_rate(&ex, (0.0, 40.0)).unwrap();
        assert!(power.residual_se > 0.5 && power.excluded == 1);
        assert!((expo.slope + 0.25).abs() < 1e-12 && expo.residual_se < 1e-12);

        let scaled: Vec<(f64, f64)> = lin.iter().map(|&t| (t, 5.0 * (-t / 4.0).exp())).collect();
        assert!((estimate_exponential_rate(&scaled, (0.0, 40.0)).unwrap().slope + 0.25).abs() < 1e-12);
        let mix: Vec<(f64, f64)> = lin.iter().map(|&t| (t, (-t).exp() + (-t / 4.0).exp())).collect();
        let s = estimate_exponential_rate(&mix, (20.0, 40.0)).unwrap().slope;
        assert!(s > -0.26 && s < -0.24);
        assert!(estimate_rate(&pl[..4], (1.0, 100.0)).is_err());
    }

    #[test]
    fn envelope_examples() {
        let ts: Vec<f64> = (1..=50).map(|i| i as f64).collect();
        let env = |t: f64| (-t / 4.0).exp();
        let y3: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 3.0 * env(t))).collect();
        assert!((envelope_fit(&y3, &env, (1.0, 50.0)).unwrap() - 3.0).abs() < 1e-12);
        let y: Vec<(f64, f64)> = ts.iter().map(|&t| (t, env(t) * (1.0 + 1.0 / t))).collect();
        assert!((envelope_fit(&y, &env, (1.0, 50.0)).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn diagnostics_examples() {
        let mut c = cfg(0.0);
        c.x0 = vec![0.0, 0.0];
        let zero = simulate_path(&c, 0, Integrator::Isihd, None).unwrap();
        let gamma = c.gamma.clone();
        let d = as_diagnostics(&zero, &Weight::Derived(DerivedQuantity::Gamma), &gamma, 0.1).unwrap();
        assert_eq!((d.tail_integral, d.tail_sup), (0.0, 0.0));
        assert!(d.distance.iter().all(|p| p.1 == 0.0));

        let mut flat = zero.clone();
        flat.records.iter_mut().for_each(|r| r.f_gap = 1.0);
        let d = as_diagnostics(&flat, &Weight::Constant { value: 1.0 }, &gamma, 0.1).unwrap();
        assert!((d.tail_integral - (20.0 - d.scaled.iter().find(|p| p.0 >= 2.0).unwrap().0)).abs() < 1e-9);
        assert!(!d.o_proxy_pass);
    }

    #[test]
    fn quantiles_and_variation() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!((s.mean, s.q50, s.q10, s.q90), (3.0, 3.0, 1.4, 4.6));
        assert_eq!(total_variation(&[1.0, 3.0, 2.0]), 3.0);
    }
}
