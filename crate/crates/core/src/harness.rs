//! Experiment configs, presets and the runners behind the command line.

use crate::dynamics::{CheckpointPolicy, Integrator, NoiseKind, NoiseModel, SdeConfig, Trajectory};
use crate::error::{Error, Result};
use crate::lyapunov::{
    theta_envelope, verify_system, CoefficientQuadruple, CustomQuadrupleSpec, EnergyEvaluator, SystemReport,
};
use crate::montecarlo::{
    as_diagnostics, distance_series, envelope_fit, estimate_exponential_rate, estimate_rate, last_decade,
    median_path, run_ensemble, total_variation, Ensemble, FitKind, RateFit, Weight,
};
use crate::problems::{Objective, ProblemSpec};
use crate::schedules::{log_grid, DampingSchedule, DiffusionSchedule, GeometricSchedule};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

fn default_noise() -> NoiseKind {
    NoiseKind::Isotropic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t0: f64,
    pub t_end: f64,
    pub h: f64,
    pub checkpoints: CheckpointPolicy,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// Defaults to the all-ones vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Defaults to zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provenance", rename_all = "snake_case")]
pub enum QuadrupleSpec {
    Cor1 { alpha: f64, gamma0: f64, beta1: f64, b: f64 },
    /// Uses the experiment's γ.
    Corabcdd { beta: f64, b: f64 },
    Custom(CustomQuadrupleSpec),
    /// A TOML file holding a custom quadruple.
    CustomFile { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateCheck {
    pub field: String,
    pub fit: FitKind,
    /// Defaults to the last decade of checkpoint times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    pub band: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeCheck {
    pub field: String,
    pub mu: f64,
    pub window: [f64; 2],
    /// Allowed relative change of C when the window start doubles.
    pub stability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsCheck {
    pub weight: Weight,
    pub tail_fraction: f64,
    pub min_pass_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovCheck {
    pub quadruple: QuadrupleSpec,
    pub grid_points: usize,
    pub grid_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergySpec {
    General { quadruple: QuadrupleSpec },
    StronglyConvex { mu: f64, beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakCheck {
    pub max_dist: f64,
    pub max_tv_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analyses {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergySpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rates: Vec<RateCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub as_diagnostics: Option<AsCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak_convergence: Option<WeakCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub integrator: Integrator,
    #[serde(default = "default_noise")]
    pub noise: NoiseKind,
    pub paths: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub problem: ProblemSpec,
    pub gamma: DampingSchedule,
    pub beta: GeometricSchedule,
    pub sigma: DiffusionSchedule,
    pub time: TimeSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub analyses: Analyses,
}

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub source: &'static str,
}

pub const PRESETS: [Preset; 6] = [
    Preset {
        name: "cor1",
        description: "γ = α/t, β = γ0 + β1/t on a 10-d quadratic; fast O(1/t²) decay",
        source: include_str!("../presets/cor1.toml"),
    },
    Preset {
        name: "corabcdd-tr",
        description: "decreasing γ = α/t^r with constant β; O(1/Γ²) decay",
        source: include_str!("../presets/corabcdd-tr.toml"),
    },
    Preset {
        name: "strongly-convex",
        description: "μ = 1 quadratic, γ = 2√μ, exponentially vanishing noise; Θ(t) envelope",
        source: include_str!("../presets/strongly-convex.toml"),
    },
    Preset {
        name: "beta-zero-atr",
        description: "β = 0, γ = 1/√t, slowly decaying noise; slope and o(1/θ) proxy",
        source: include_str!("../presets/beta-zero-atr.toml"),
    },
    Preset {
        name: "weak-convergence",
        description: "rank-deficient least squares; trajectories settle on one solution",
        source: include_str!("../presets/weak-convergence.toml"),
    },
    Preset {
        name: "sgf-baseline",
        description: "first-order stochastic gradient flow on the cor1 problem",
        source: include_str!("../presets/sgf-baseline.toml"),
    },
];

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let p = PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?;
    ExperimentConfig::from_toml(p.source)
}

/// A validated config with everything needed to run it.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub sde: SdeConfig,
    pub energy: Option<EnergyEvaluator>,
}

fn cfg_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn custom_from_file(path: &str) -> Result<CustomQuadrupleSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("quadruple file {path}: {e}")))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("quadruple file {path}: {e}")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Canonical serialization; the config hash is taken over it.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(self.output_dir.clone().unwrap_or_else(|| format!("out/{}", self.name)))
    }

    /// Builds the quadruple named by `spec` against this config's schedules.
    pub fn quadruple(&self, spec: &QuadrupleSpec, grid_points: usize, grid_end: f64) -> Result<CoefficientQuadruple> {
        match spec {
            QuadrupleSpec::Cor1 { alpha, gamma0, beta1, b } => {
                if !(*alpha > 3.0 && *gamma0 > 0.0 && *beta1 >= 0.0) {
                    return Err(Error::Config(format!(
                        "analyses.lyapunov.quadruple: cor1 needs alpha > 3, gamma0 > 0, beta1 ≥ 0"
                    )));
                }
                // b is deliberately not range-checked so mutations can be verified.
                Ok(CoefficientQuadruple::cor1_unchecked(*alpha, *gamma0, *beta1, *b))
            }
            QuadrupleSpec::Corabcdd { beta, b } => {
                if grid_points < 100 || !(grid_end > self.gamma.t0().max(1e-12)) {
                    return Err(Error::Config("analyses.lyapunov: grid_points ≥ 100 and grid_end > t0 needed".into()));
                }
                let grid = log_grid(self.gamma.t0().max(self.time.t0).max(1e-6), grid_end, grid_points);
                CoefficientQuadruple::corabcdd(&self.gamma, *beta, *b, &grid)
            }
            QuadrupleSpec::Custom(c) => Ok(CoefficientQuadruple::from_spec(c)),
            QuadrupleSpec::CustomFile { path } => Ok(CoefficientQuadruple::from_spec(&custom_from_file(path)?)),
        }
    }

    pub fn build(&self) -> Result<Experiment> {
        self.build_inner().map_err(cfg_err)
    }

    fn build_inner(&self) -> Result<Experiment> {
        if self.paths == 0 {
            return Err(Error::Config("paths must be ≥ 1".into()));
        }
        let objective: Objective = self.problem.build()?;
        let d = objective.dim();
        let x0 = self.initial.x0.clone().unwrap_or_else(|| vec![1.0; d]);
        let v0 = self.initial.v0.clone().unwrap_or_else(|| vec![0.0; d]);
        let TimeSpec { t0, t_end, h, checkpoints } = &self.time;
        let sde = SdeConfig {
            t0: *t0,
            t_end: *t_end,
            h: *h,
            gamma: self.gamma.clone(),
            beta: self.beta.clone(),
            noise: NoiseModel::new(self.noise, self.sigma.clone(), d)?,
            objective,
            x0,
            v0,
            master_seed: self.master_seed,
            checkpoints: checkpoints.resolve(*t0, *t_end, *h)?,
        };
        sde.validate()?;
        let energy = match &self.analyses.energy {
            None => None,
            Some(EnergySpec::StronglyConvex { mu, beta }) => {
                let e = EnergyEvaluator::StronglyConvex { mu: *mu, beta: *beta };
                e.evaluate(sde.t0, *beta, &sde.x0, &sde.v0, &sde.objective)
                    .map_err(|e| Error::Config(format!("analyses.energy: {e}")))?;
                Some(e)
            }
            Some(EnergySpec::General { quadruple }) => {
                let q = self.quadruple(quadruple, 500, 10.0 * sde.t_end)?;
                let x_star = sde.objective.project_solution(&sde.x0);
                Some(EnergyEvaluator::General { quadruple: q, x_star })
            }
        };
        if let Some(e) = &energy {
            let first = sde.time_at(sde.checkpoint_steps()[0]);
            if e.t_min() > first {
                return Err(Error::Config(format!(
                    "analyses.energy: first checkpoint {first} precedes the quadruple threshold {}",
                    e.t_min()
                )));
            }
        }
        for r in &self.analyses.rates {
            if !crate::montecarlo::FIELDS.contains(&r.field.as_str()) {
                return Err(Error::Config(format!("analyses.rates.field: unknown field {:?}", r.field)));
            }
            if r.field == "energy" && energy.is_none() {
                return Err(Error::Config("analyses.rates.field = \"energy\" needs analyses.energy".into()));
            }
        }
        if let Some(l) = &self.analyses.lyapunov {
            if l.grid_points < 2 || !(l.grid_end > 0.0) {
                return Err(Error::Config("analyses.lyapunov: grid_points ≥ 2 and grid_end > 0 needed".into()));
            }
        }
        Ok(Experiment { config: self.clone(), sde, energy })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: Value,
}

/// Result of a command: pass/fail plus the files written.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    /// 0 on success, 1 on a failed criterion or divergence.
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

/// Collects output files, then writes them together with a manifest.
struct Writer {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Writer {
    fn new(dir: PathBuf) -> Self {
        Writer { dir, files: Vec::new() }
    }

    fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    fn finish(mut self, exp: &ExperimentConfig, command: &str) -> Result<Vec<PathBuf>> {
        let listing: Vec<Value> = self
            .files
            .iter()
            .map(|(n, b)| json!({ "file": n, "sha256": hex::encode(Sha256::digest(b)) }))
            .collect();
        let manifest = json!({
            "command": command,
            "name": exp.name,
            "config_hash": exp.hash(),
            "master_seed": exp.master_seed,
            "paths": exp.paths,
            "version": env!("CARGO_PKG_VERSION"),
            "files": listing,
            "config": exp.to_toml(),
        });
        self.add("manifest.json", serde_json::to_string_pretty(&manifest).unwrap() + "\n");
        std::fs::create_dir_all(&self.dir)?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn divergence_check(ens: &Ensemble) -> Check {
    let n = ens.stats.divergent_paths.len();
    Check {
        name: "no_divergence".into(),
        pass: n == 0,
        detail: json!({ "divergent_paths": ens.stats.divergent_paths }),
    }
}

fn needs_paths(a: &Analyses) -> bool {
    a.as_diagnostics.is_some() || a.weak_convergence.is_some()
}

fn ensemble(exp: &Experiment, keep: bool) -> Result<Ensemble> {
    run_ensemble(&exp.sde, exp.config.paths, exp.config.integrator, exp.energy.as_ref(), keep)
}

fn trajectory_json(t: &Trajectory) -> String {
    let v = json!({ "path_id": t.path_id, "divergence": t.divergence, "records": t.records });
    serde_json::to_string_pretty(&v).unwrap() + "\n"
}

/// Simulates every path and writes one file per path plus a manifest.
pub fn cmd_simulate(exp: &Experiment, out: &Path, format: Format) -> Result<Outcome> {
    let ens = ensemble(exp, true)?;
    let mut w = Writer::new(out.to_path_buf());
    for t in ens.paths.as_ref().unwrap() {
        match format {
            Format::Csv => w.add(format!("path_{:04}.csv", t.path_id), t.to_csv()),
            Format::Json => w.add(format!("path_{:04}.json", t.path_id), trajectory_json(t)),
        }
    }
    let check = divergence_check(&ens);
    let files = w.finish(&exp.config, "simulate")?;
    Ok(Outcome { pass: check.pass, checks: vec![check], files })
}

fn ensemble_file(ens: &Ensemble, format: Format) -> (String, String) {
    match format {
        Format::Csv => ("ensemble.csv".into(), ens.stats.to_csv()),
        Format::Json => ("ensemble.json".into(), serde_json::to_string_pretty(&ens.stats).unwrap() + "\n"),
    }
}

/// Runs the ensemble and writes its statistics and a plot script.
pub fn cmd_ensemble(exp: &Experiment, out: &Path, format: Format) -> Result<Outcome> {
    let ens = ensemble(exp, false)?;
    let mut w = Writer::new(out.to_path_buf());
    let (name, body) = ensemble_file(&ens, format);
    w.add(name, body);
    w.add("plot.py", plot_script(&exp.config.name));
    let check = divergence_check(&ens);
    let files = w.finish(&exp.config, "ensemble")?;
    Ok(Outcome { pass: check.pass, checks: vec![check], files })
}

/// Verifies the configured quadruple; passes iff all six relations hold on
/// the grid from t_hat to grid_end.
pub fn verify_lyapunov(exp: &Experiment) -> Result<SystemReport> {
    let cfg = &exp.config;
    let l = cfg
        .analyses
        .lyapunov
        .as_ref()
        .ok_or_else(|| Error::Config("analyses.lyapunov is missing".into()))?;
    let q = cfg.quadruple(&l.quadruple, l.grid_points, l.grid_end).map_err(cfg_err)?;
    let lo = q.t_hat().max(cfg.gamma.t0()).max(1e-6);
    if !(l.grid_end > lo) {
        return Err(Error::Config(format!("analyses.lyapunov.grid_end must exceed t_hat = {lo}")));
    }
    let grid = log_grid(lo, l.grid_end, l.grid_points);
    Ok(verify_system(&q, &cfg.gamma, &cfg.beta, &grid))
}

pub fn cmd_verify_lyapunov(exp: &Experiment, out: &Path) -> Result<Outcome> {
    let report = verify_lyapunov(exp)?;
    let mut w = Writer::new(out.to_path_buf());
    w.add("system_report.json", report.to_json() + "\n");
    let check = Check {
        name: "lyapunov_system".into(),
        pass: report.all_pass,
        detail: json!({ "t_hat": report.t_hat, "binding_condition": report.binding_condition() }),
    };
    let files = w.finish(&exp.config, "verify-lyapunov")?;
    Ok(Outcome { pass: check.pass, checks: vec![check], files })
}

/// Everything `rates` computes, kept for callers that inspect it.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub ensemble: Ensemble,
    pub fits: Vec<RateFit>,
    pub checks: Vec<Check>,
    pub diagnostics: Vec<Value>,
}

/// Runs the ensemble and every configured analysis.
pub fn evaluate(exp: &Experiment) -> Result<Evaluation> {
    let cfg = &exp.config;
    let a = &cfg.analyses;
    let ens = ensemble(exp, needs_paths(a))?;
    let mut checks = vec![divergence_check(&ens)];
    let mut fits = Vec::new();
    let mut diagnostics = Vec::new();

    for r in &a.rates {
        let series = ens.stats.mean_series(&r.field).expect("field validated at build");
        let window = r.window.map_or_else(|| last_decade(&series), |w| (w[0], w[1]));
        let fit = match r.fit {
            FitKind::Power => estimate_rate(&series, window)?,
            FitKind::Exponential => estimate_exponential_rate(&series, window)?,
        };
        let pass = fit.slope >= r.band[0] && fit.slope <= r.band[1];
        checks.push(Check {
            name: format!("rate_{}", r.field),
            pass,
            detail: json!({ "slope": fit.slope, "band": r.band, "window": [window.0, window.1] }),
        });
        fits.push(fit);
    }

    if let Some(e) = &a.envelope {
        let series = ens
            .stats
            .mean_series(&e.field)
            .ok_or_else(|| Error::Config(format!("analyses.envelope.field: no field {:?}", e.field)))?;
        let env = |t: f64| theta_envelope(e.mu, &cfg.sigma, cfg.time.t0, t).unwrap_or(f64::NAN);
        let c1 = envelope_fit(&series, &env, (e.window[0], e.window[1]))?;
        let c2 = envelope_fit(&series, &env, (2.0 * e.window[0], e.window[1]))?;
        let change = (c2 / c1 - 1.0).abs();
        checks.push(Check {
            name: "envelope_stability".into(),
            pass: c1.is_finite() && change <= e.stability,
            detail: json!({ "c": c1, "c_doubled_start": c2, "relative_change": change }),
        });
    }

    if let Some(d) = &a.as_diagnostics {
        let paths = ens.paths.as_ref().unwrap();
        let mut passing = 0usize;
        let mut worst: Option<(u64, f64)> = None;
        let mut per_path = Vec::new();
        for t in paths.iter().filter(|t| !t.diverged()) {
            let diag = as_diagnostics(t, &d.weight, &cfg.gamma, d.tail_fraction)?;
            passing += diag.o_proxy_pass as usize;
            let ratio = diag.sup_late / diag.sup_early;
            if worst.is_none_or(|(_, r)| ratio > r) {
                worst = Some((t.path_id, ratio));
            }
            per_path.push(json!({
                "path_id": t.path_id, "tail_integral": diag.tail_integral, "tail_sup": diag.tail_sup,
                "sup_early": diag.sup_early, "sup_late": diag.sup_late, "pass": diag.o_proxy_pass,
            }));
        }
        let total = per_path.len().max(1);
        let fraction = passing as f64 / total as f64;
        if let Some(m) = median_path(paths) {
            let diag = as_diagnostics(&paths[m], &d.weight, &cfg.gamma, d.tail_fraction)?;
            diagnostics.push(json!({ "median_path": serde_json::to_value(&diag).unwrap() }));
        }
        diagnostics.push(json!({ "per_path": per_path }));
        checks.push(Check {
            name: "as_o_proxy".into(),
            pass: fraction >= d.min_pass_fraction,
            detail: json!({ "pass_fraction": fraction, "required": d.min_pass_fraction,
                            "worst_path": worst.map(|w| w.0), "worst_ratio": worst.map(|w| w.1) }),
        });
    }

    if let Some(wc) = &a.weak_convergence {
        let paths = ens.paths.as_ref().unwrap();
        let x_ref = exp.sde.objective.project_solution(&vec![0.0; exp.sde.dim()]);
        let mut all = true;
        let mut worst_dist: f64 = 0.0;
        let mut worst_tv: f64 = 0.0;
        for t in paths {
            let dist = t.records.last().map_or(f64::INFINITY, |r| r.dist2.sqrt());
            let series = distance_series(t, &x_ref);
            let (lo, _) = last_decade(&series);
            let tail: Vec<f64> = series.iter().filter(|p| p.0 >= lo).map(|p| p.1).collect();
            let end = tail.last().copied().unwrap_or(f64::NAN);
            let tv = total_variation(&tail) / end;
            all &= !t.diverged() && dist < wc.max_dist && tv < wc.max_tv_fraction;
            worst_dist = worst_dist.max(dist);
            worst_tv = worst_tv.max(tv);
        }
        checks.push(Check {
            name: "weak_convergence".into(),
            pass: all,
            detail: json!({ "max_dist": worst_dist, "max_tv_fraction": worst_tv }),
        });
    }

    if a.lyapunov.is_some() {
        let report = verify_lyapunov(exp)?;
        checks.push(Check {
            name: "lyapunov_system".into(),
            pass: report.all_pass,
            detail: json!({ "t_hat": report.t_hat, "binding_condition": report.binding_condition() }),
        });
    }

    Ok(Evaluation { ensemble: ens, fits, checks, diagnostics })
}

/// Runs the ensemble and all analyses; passes iff every check passes.
pub fn cmd_rates(exp: &Experiment, out: &Path, format: Format) -> Result<Outcome> {
    let eval = evaluate(exp)?;
    let mut w = Writer::new(out.to_path_buf());
    let (name, body) = ensemble_file(&eval.ensemble, format);
    w.add(name, body);
    w.add("rates.json", serde_json::to_string_pretty(&eval.fits).unwrap() + "\n");
    w.add("verdicts.json", serde_json::to_string_pretty(&eval.checks).unwrap() + "\n");
    if !eval.diagnostics.is_empty() {
        w.add("diagnostics.json", serde_json::to_string_pretty(&eval.diagnostics).unwrap() + "\n");
    }
    w.add("plot.py", plot_script(&exp.config.name));
    let files = w.finish(&exp.config, "rates")?;
    let pass = eval.checks.iter().all(|c| c.pass);
    Ok(Outcome { pass, checks: eval.checks, files })
}

pub fn plot_script(name: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
# Plots ensemble.csv written next to this script (needs pandas and matplotlib).
import pathlib
import matplotlib.pyplot as plt
import pandas as pd

here = pathlib.Path(__file__).resolve().parent
df = pd.read_csv(here / "ensemble.csv")
fields = [c[:-5] for c in df.columns if c.endswith("_mean")]
fig, axes = plt.subplots(1, len(fields), figsize=(4 * len(fields), 3.5), squeeze=False)
for ax, f in zip(axes[0], fields):
    ax.fill_between(df["t"], df[f + "_q10"], df[f + "_q90"], alpha=0.3, label="10-90%")
    ax.plot(df["t"], df[f + "_mean"], label="mean")
    ax.set_xscale("log" if df["t"].min() > 0 else "linear")
    ax.set_yscale("log")
    ax.set_title(f)
    ax.set_xlabel("t")
axes[0][0].legend()
fig.suptitle("{name}")
fig.tight_layout()
fig.savefig(here / "ensemble.png", dpi=120)
"#
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_validate_and_round_trip() {
        assert_eq!(PRESETS.len(), 6);
        for p in PRESETS {
            let cfg = preset(p.name).unwrap();
            assert_eq!(cfg.name, p.name);
            cfg.build().unwrap_or_else(|e| panic!("{}: {e}", p.name));
            let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
            assert_eq!(again, cfg);
            assert_eq!(again.hash(), cfg.hash());
        }
    }

    #[test]
    fn cor1_defaults_match_the_fast_rate_setting() {
        let c = preset("cor1").unwrap();
        assert_eq!((c.paths, c.time.t0, c.time.t_end, c.time.h), (256, 1.0, 1000.0, 0.01));
        assert_eq!(c.gamma, DampingSchedule::power(4.0, 1.0, 1.0).unwrap());
        assert_eq!(c.beta, GeometricSchedule::affine_inverse(0.5, 1.0, 1.0).unwrap());
        assert_eq!(c.sigma, DiffusionSchedule::power(0.1, 1.6, 1.0).unwrap());
        let obj = c.problem.build().unwrap();
        assert_eq!((obj.dim(), obj.strong_mu(), obj.lipschitz()), (10, 1.0, 100.0));
    }

    #[test]
    fn hash_tracks_every_field() {
        let base = preset("cor1").unwrap();
        let mut changed = base.clone();
        changed.master_seed += 1;
        assert_ne!(base.hash(), changed.hash());
        let mut changed = base.clone();
        changed.time.h = 0.005;
        assert_ne!(base.hash(), changed.hash());
        assert_eq!(base.hash(), preset("cor1").unwrap().hash());
    }

    #[test]
    fn parse_errors_name_the_field() {
        let text = PRESETS[0].source.replace("h = 0.01", "h = \"fast\"");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("line") || err.contains("h"), "{err}");
        let mut bad = preset("cor1").unwrap();
        bad.time.h = 0.5;
        assert!(matches!(bad.build(), Err(Error::Config(_))));
    }
}
