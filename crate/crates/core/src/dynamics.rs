//! Euler–Maruyama integrators for the inertial dynamics, the (X, Y)
//! reformulation, the β = 0 system and the first-order gradient flow.

use crate::error::{invalid, Error, Result};
use crate::lyapunov::EnergyEvaluator;
use crate::problems::Objective;
use crate::rng::GaussianStream;
use crate::schedules::{log_grid, DampingSchedule, DiffusionSchedule, GeometricSchedule};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Components above this magnitude flag a path as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// σ(t, x) = (σ∞(t)/√d)·I.
    Isotropic,
    /// σ(t, x) = (σ∞(t)/√d)·diag(m(x_i)) with m(u) = (1 + cos u)/2.
    StateModulated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub schedule: DiffusionSchedule,
    pub dim: usize,
}

fn modulation(u: f64) -> f64 {
    0.5 * (1.0 + u.cos())
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, schedule: DiffusionSchedule, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("noise dimension must be positive"));
        }
        Ok(NoiseModel { kind, schedule, dim })
    }

    pub fn is_zero(&self) -> bool {
        self.schedule.is_zero()
    }

    /// Writes σ(t, point)·g into `out`.
    pub fn apply(&self, t: f64, point: &[f64], g: &[f64], out: &mut [f64]) {
        let scale = self.schedule.value(t) / (self.dim as f64).sqrt();
        match self.kind {
            NoiseKind::Isotropic => out.iter_mut().zip(g).for_each(|(o, g)| *o = scale * g),
            NoiseKind::StateModulated => {
                for i in 0..out.len() {
                    out[i] = scale * modulation(point[i]) * g[i];
                }
            }
        }
    }

    /// Hilbert–Schmidt norm of σ(t, point).
    pub fn hs_norm(&self, t: f64, point: &[f64]) -> f64 {
        let scale = self.schedule.value(t) / (self.dim as f64).sqrt();
        match self.kind {
            NoiseKind::Isotropic => scale * (self.dim as f64).sqrt(),
            NoiseKind::StateModulated => scale * point.iter().map(|&u| modulation(u).powi(2)).sum::<f64>().sqrt(),
        }
    }

    /// ‖σ(t, x) − σ(t, x')‖_HS.
    pub fn hs_distance(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            NoiseKind::Isotropic => 0.0,
            NoiseKind::StateModulated => {
                let scale = self.schedule.value(t) / (self.dim as f64).sqrt();
                scale * x.iter().zip(y).map(|(a, b)| (modulation(*a) - modulation(*b)).powi(2)).sum::<f64>().sqrt()
            }
        }
    }

    /// Lipschitz constant l0 in x of the diffusion, uniform in t ≥ t0.
    pub fn l0(&self) -> f64 {
        match self.kind {
            NoiseKind::Isotropic => 0.0,
            // |m'| ≤ 1/2 and σ∞ is nonincreasing.
            NoiseKind::StateModulated => 0.5 * self.schedule.value(self.schedule.t0()) / (self.dim as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Isihd,
    Refor,
    Igs,
    Sgf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckpointPolicy {
    /// `count` log-spaced times on [start, T]; start defaults to max(t0, h).
    Geometric {
        count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<f64>,
    },
    Linear {
        count: usize,
    },
    Explicit {
        times: Vec<f64>,
    },
}

impl CheckpointPolicy {
    pub fn resolve(&self, t0: f64, t_end: f64, h: f64) -> Result<Vec<f64>> {
        match self {
            CheckpointPolicy::Geometric { count, start } => {
                let lo = start.unwrap_or(t0.max(h));
                if *count < 2 || !(lo > 0.0) || !(lo < t_end) {
                    return Err(invalid("geometric checkpoints need count ≥ 2 and 0 < start < T"));
                }
                Ok(log_grid(lo, t_end, *count))
            }
            CheckpointPolicy::Linear { count } => {
                if *count < 2 {
                    return Err(invalid("linear checkpoints need count ≥ 2"));
                }
                Ok((0..*count).map(|i| t0 + (t_end - t0) * i as f64 / (*count - 1) as f64).collect())
            }
            CheckpointPolicy::Explicit { times } => Ok(times.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdeConfig {
    pub t0: f64,
    pub t_end: f64,
    pub h: f64,
    pub gamma: DampingSchedule,
    pub beta: GeometricSchedule,
    pub noise: NoiseModel,
    pub objective: Objective,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub master_seed: u64,
    pub checkpoints: Vec<f64>,
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.objective.dim();
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(invalid(format!("step h must be positive, got {}", self.h)));
        }
        if !(self.t_end > self.t0) {
            return Err(invalid(format!("T = {} must exceed t0 = {}", self.t_end, self.t0)));
        }
        if self.x0.len() != d || self.v0.len() != d || self.noise.dim != d {
            return Err(invalid(format!("x0, v0 and noise must have the objective dimension {d}")));
        }
        if self.t0 < self.gamma.t0() {
            return Err(invalid(format!("t0 = {} precedes the damping domain start {}", self.t0, self.gamma.t0())));
        }
        let g0 = self.gamma.value(self.t0);
        if g0 > 0.0 && self.h > 0.5 / g0 {
            return Err(invalid(format!("h = {} violates the stability guard h ≤ 1/(2γ(t0)) = {}", self.h, 0.5 / g0)));
        }
        if self.checkpoints.is_empty() {
            return Err(invalid("no checkpoints"));
        }
        if self.checkpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("checkpoints must be strictly increasing"));
        }
        let tol = 1e-9 * self.t_end.abs().max(1.0);
        if self.checkpoints[0] < self.t0 - tol || *self.checkpoints.last().unwrap() > self.t_end + tol {
            return Err(invalid("checkpoints must lie in [t0, T]"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn n_steps(&self) -> u64 {
        ((self.t_end - self.t0) / self.h).round() as u64
    }

    /// t_k = t0 + k·h, computed without accumulation.
    pub fn time_at(&self, k: u64) -> f64 {
        self.t0 + k as f64 * self.h
    }

    /// Checkpoint step indices, snapped to the step grid and deduplicated.
    pub fn checkpoint_steps(&self) -> Vec<u64> {
        let n = self.n_steps();
        let mut steps: Vec<u64> =
            self.checkpoints.iter().map(|&t| (((t - self.t0) / self.h).round().max(0.0) as u64).min(n)).collect();
        steps.dedup();
        steps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PathState {
    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.v).all(|c| c.is_finite() && c.abs() <= DIVERGENCE_THRESHOLD)
    }
}

/// State of the reformulated system.
#[derive(Debug, Clone, PartialEq)]
pub struct ReforState {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl ReforState {
    /// Y = X + β(t)V.
    pub fn from_path(state: &PathState, beta: &GeometricSchedule) -> Self {
        let b = beta.value(state.t);
        ReforState { t: state.t, x: state.x.clone(), y: state.x.iter().zip(&state.v).map(|(x, v)| x + b * v).collect() }
    }

    /// V = (Y − X)/β(t).
    pub fn to_path(&self, beta: &GeometricSchedule) -> PathState {
        let b = beta.value(self.t);
        PathState { t: self.t, x: self.x.clone(), v: self.y.iter().zip(&self.x).map(|(y, x)| (y - x) / b).collect() }
    }
}

/// Scratch buffers reused across steps.
#[derive(Debug, Clone)]
pub struct Workspace {
    point: Vec<f64>,
    grad: Vec<f64>,
    noise: Vec<f64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Workspace { point: vec![0.0; dim], grad: vec![0.0; dim], noise: vec![0.0; dim] }
    }
}

fn inertial_step(state: &mut PathState, cfg: &SdeConfig, beta_k: f64, gaussian: &[f64], ws: &mut Workspace) {
    let (t, h) = (state.t, cfg.h);
    let gamma_k = cfg.gamma.value(t);
    for i in 0..state.x.len() {
        ws.point[i] = state.x[i] + beta_k * state.v[i];
    }
    cfg.objective.gradient_into(&ws.point, &mut ws.grad);
    cfg.noise.apply(t, &ws.point, gaussian, &mut ws.noise);
    let damp = 1.0 - gamma_k * h;
    let sh = h.sqrt();
    for i in 0..state.x.len() {
        state.x[i] += h * state.v[i];
        state.v[i] = damp * state.v[i] - h * ws.grad[i] + sh * ws.noise[i];
    }
    state.t += h;
}

/// X ← X + hV; V ← (1−γh)V − h∇f(X+βV) + √h·σ(t, X+βV)G.
pub fn step_isihd(state: &mut PathState, cfg: &SdeConfig, gaussian: &[f64], ws: &mut Workspace) {
    let beta_k = cfg.beta.value(state.t);
    inertial_step(state, cfg, beta_k, gaussian, ws);
}

/// The β = 0 update with the diffusion evaluated at X.
pub fn step_igs(state: &mut PathState, cfg: &SdeConfig, gaussian: &[f64], ws: &mut Workspace) {
    inertial_step(state, cfg, 0.0, gaussian, ws);
}

/// Euler–Maruyama step of dX = −(X−Y)/β dt,
/// dY = −β∇f(Y)dt − (β'−γβ+1)(X−Y)/β dt + βσ(t,Y)dW.
pub fn step_refor(state: &mut ReforState, cfg: &SdeConfig, gaussian: &[f64], ws: &mut Workspace) {
    let (t, h) = (state.t, cfg.h);
    let b = cfg.beta.value_and_derivative(t);
    let gamma_k = cfg.gamma.value(t);
    cfg.objective.gradient_into(&state.y, &mut ws.grad);
    cfg.noise.apply(t, &state.y, gaussian, &mut ws.noise);
    let coupling = (b.derivative - gamma_k * b.value + 1.0) / b.value;
    let sh = h.sqrt();
    for i in 0..state.x.len() {
        let gap = state.x[i] - state.y[i];
        state.x[i] -= h * gap / b.value;
        state.y[i] += -h * b.value * ws.grad[i] - h * coupling * gap + sh * b.value * ws.noise[i];
    }
    state.t += h;
}

/// X ← X − h∇f(X) + √h·σ(t, X)G.
pub fn step_sgf(x: &mut [f64], t: f64, cfg: &SdeConfig, gaussian: &[f64], ws: &mut Workspace) {
    let h = cfg.h;
    cfg.objective.gradient_into(x, &mut ws.grad);
    cfg.noise.apply(t, x, gaussian, &mut ws.noise);
    let sh = h.sqrt();
    for i in 0..x.len() {
        x[i] += -h * ws.grad[i] + sh * ws.noise[i];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Record {
    pub t: f64,
    pub f_gap: f64,
    pub speed2: f64,
    pub grad2: f64,
    pub grad_shift2: f64,
    pub dist2: f64,
    pub energy: Option<f64>,
}

/// Divergence report: the step at which a component left the finite range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Divergence {
    pub step: u64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub path_id: u64,
    pub records: Vec<Record>,
    pub divergence: Option<Divergence>,
    /// Position at the last recorded checkpoint.
    pub final_x: Vec<f64>,
    /// Position at every checkpoint, kept for stabilization diagnostics.
    pub positions: Vec<Vec<f64>>,
}

pub const CSV_FIELDS: [&str; 6] = ["t", "f_gap", "speed2", "grad2", "grad_shift2", "dist2"];

impl Trajectory {
    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    pub fn has_energy(&self) -> bool {
        self.records.first().is_some_and(|r| r.energy.is_some())
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// CSV with a header row; f64 values in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let energy = self.has_energy();
        let mut out = CSV_FIELDS.join(",");
        if energy {
            out.push_str(",energy");
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{},{},{},{},{}", r.t, r.f_gap, r.speed2, r.grad2, r.grad_shift2, r.dist2);
            if let Some(e) = r.energy.filter(|_| energy) {
                let _ = write!(out, ",{e}");
            }
            out.push('\n');
        }
        out
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum()
}

fn record(
    cfg: &SdeConfig,
    energy: Option<&EnergyEvaluator>,
    t: f64,
    beta_t: f64,
    x: &[f64],
    v: &[f64],
) -> Result<Record> {
    let shifted: Vec<f64> = x.iter().zip(v).map(|(x, v)| x + beta_t * v).collect();
    let obj = &cfg.objective;
    let proj = obj.project_solution(x);
    let dist2 = x.iter().zip(&proj).map(|(a, b)| (a - b) * (a - b)).sum();
    let energy = match energy {
        Some(e) => Some(e.evaluate(t, beta_t, x, v, obj)?),
        None => None,
    };
    Ok(Record {
        t,
        f_gap: obj.gap(x),
        speed2: norm2(v),
        grad2: norm2(&obj.gradient(x)),
        grad_shift2: norm2(&obj.gradient(&shifted)),
        dist2,
        energy,
    })
}

/// Integrates one sample path. The Gaussian draw for step k of path
/// `path_id` is a pure function of (master_seed, path_id, k).
pub fn simulate_path(
    cfg: &SdeConfig,
    path_id: u64,
    integrator: Integrator,
    energy: Option<&EnergyEvaluator>,
) -> Result<Trajectory> {
    cfg.validate()?;
    match integrator {
        Integrator::Igs if !cfg.beta.is_zero() => {
            return Err(invalid("the igs integrator needs the zero geometric damping"));
        }
        Integrator::Refor if !(cfg.beta.value(cfg.t0) > 0.0) || cfg.beta.is_zero() => {
            return Err(invalid("the reformulated integrator needs β > 0"));
        }
        _ => {}
    }
    let steps = cfg.checkpoint_steps();
    if let Some(e) = energy {
        let first = cfg.time_at(steps[0]);
        if e.t_min() > first {
            return Err(Error::Domain { t: first, lo: e.t_min(), hi: f64::INFINITY });
        }
    }
    let dim = cfg.dim();
    let mut stream = GaussianStream::new(cfg.master_seed, path_id, dim);
    let mut gaussian = vec![0.0; dim];
    let mut ws = Workspace::new(dim);
    let noisy = !cfg.noise.is_zero();
    let beta_at = |t: f64| if integrator == Integrator::Sgf { 0.0 } else { cfg.beta.value(t) };

    let mut state = PathState { t: cfg.t0, x: cfg.x0.clone(), v: cfg.v0.clone() };
    if integrator == Integrator::Sgf {
        state.v.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut refor = ReforState::from_path(&state, &cfg.beta);

    let mut traj = Trajectory {
        path_id,
        records: Vec::with_capacity(steps.len()),
        divergence: None,
        final_x: state.x.clone(),
        positions: Vec::with_capacity(steps.len()),
    };
    let mut k: u64 = 0;
    for &target in &steps {
        while k < target {
            if noisy {
                stream.fill(k, &mut gaussian);
            }
            // Every step starts from the exact grid time.
            let t = cfg.time_at(k);
            match integrator {
                Integrator::Isihd => {
                    state.t = t;
                    step_isihd(&mut state, cfg, &gaussian, &mut ws);
                }
                Integrator::Igs => {
                    state.t = t;
                    step_igs(&mut state, cfg, &gaussian, &mut ws);
                }
                Integrator::Refor => {
                    refor.t = t;
                    step_refor(&mut refor, cfg, &gaussian, &mut ws);
                }
                Integrator::Sgf => step_sgf(&mut state.x, t, cfg, &gaussian, &mut ws),
            }
            k += 1;
            let finite = match integrator {
                Integrator::Refor => refor.x.iter().chain(&refor.y).all(|c| c.is_finite() && c.abs() <= DIVERGENCE_THRESHOLD),
                _ => state.is_finite(),
            };
            if !finite {
                traj.divergence = Some(Divergence { step: k, t: cfg.time_at(k) });
                return Ok(traj);
            }
        }
        let t = cfg.time_at(k);
        if integrator == Integrator::Refor {
            refor.t = t;
            state = refor.to_path(&cfg.beta);
        }
        state.t = t;
        traj.records.push(record(cfg, energy, t, beta_at(t), &state.x, &state.v)?);
        traj.positions.push(state.x.clone());
        traj.final_x = state.x.clone();
    }
    Ok(traj)
}
