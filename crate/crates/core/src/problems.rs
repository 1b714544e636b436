//! Smooth convex test objectives with exact oracles: value, gradient,
//! L, μ, min f and the Euclidean projection onto argmin f.

use crate::error::{invalid, Result};
use nalgebra::{DMatrix, DVector, Dyn, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Full SVD with a reconstruction check. nalgebra's bidiagonal SVD can
/// return a wrong factorization for some rank-deficient inputs; those fall
/// back to one-sided Jacobi.
fn checked_svd(m: &DMatrix<f64>) -> Result<SVD<f64, Dyn, Dyn>> {
    let tol = 1e-10 * (1.0 + m.norm());
    let error = |s: &SVD<f64, Dyn, Dyn>| match (&s.u, &s.v_t) {
        (Some(u), Some(vt)) => (u * DMatrix::from_diagonal(&s.singular_values) * vt - m).norm(),
        _ => f64::INFINITY,
    };
    let direct = m.clone().svd(true, true);
    if error(&direct) <= tol {
        return Ok(direct);
    }
    let s = if m.nrows() >= m.ncols() {
        jacobi_svd(m)
    } else {
        let t = jacobi_svd(&m.transpose());
        SVD { u: t.v_t.map(|vt| vt.transpose()), v_t: t.u.map(|u| u.transpose()), singular_values: t.singular_values }
    };
    let e = error(&s);
    if e > tol {
        return Err(invalid(format!("SVD did not converge: reconstruction error {e:e}")));
    }
    Ok(s)
}

/// One-sided Jacobi SVD of a matrix with at least as many rows as columns.
fn jacobi_svd(m: &DMatrix<f64>) -> SVD<f64, Dyn, Dyn> {
    let n = m.ncols();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let (x, y) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * x - s * y;
                        mat[(i, q)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut u = DMatrix::zeros(m.nrows(), n);
    let mut vt = DMatrix::zeros(n, n);
    let mut sv = DVector::zeros(n);
    for (k, &j) in order.iter().enumerate() {
        sv[k] = norms[j];
        if norms[j] > 0.0 {
            u.set_column(k, &(a.column(j) / norms[j]));
        }
        vt.set_row(k, &v.column(j).transpose());
    }
    SVD { u: Some(u), v_t: Some(vt), singular_values: sv }
}

/// ½(x−x⋆)ᵀA(x−x⋆) + f⋆ with A = Q·diag(spectrum)·Qᵀ.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    spectrum: Vec<f64>,
    // Orthonormal eigenbasis as columns; `None` means the identity.
    basis: Option<DMatrix<f64>>,
    x_star: Vec<f64>,
    f_star: f64,
}

/// ½‖Mx − y‖² with y ∈ range(M).
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    m: DMatrix<f64>,
    y: DVector<f64>,
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    pinv: DMatrix<f64>,
    lipschitz: f64,
    mu: f64,
    rank: usize,
}

/// s·ln( Σ_j 2cosh(a_jᵀ(x−x⋆)/s) / 2k ) + f⋆: a smoothed max over the
/// affine pieces ±a_jᵀ(x−x⋆), minimized at x⋆ by symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSumExp {
    directions: DMatrix<f64>,
    smoothing: f64,
    x_star: Vec<f64>,
    f_star: f64,
    // Projector onto the null space of the directions (flat directions of f).
    null_projector: Option<DMatrix<f64>>,
    lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Quadratic(Quadratic),
    LeastSquares(LeastSquares),
    LogSumExp(LogSumExp),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_orthogonal(dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(dim, dim, |_, _| crate::rng::standard_normal(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Fix column signs so the factorization is unique.
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    crate::schedules::log_grid(lo, hi, n)
}

impl Quadratic {
    fn diff_in_basis(&self, x: &[f64]) -> Vec<f64> {
        let diff: Vec<f64> = x.iter().zip(&self.x_star).map(|(a, b)| a - b).collect();
        match &self.basis {
            None => diff,
            Some(q) => (q.transpose() * DVector::from_vec(diff)).data.into(),
        }
    }
}

impl Objective {
    /// Quadratic with the given eigenvalues, diagonal in the standard basis.
    pub fn quadratic(spectrum: Vec<f64>, x_star: Vec<f64>, f_star: f64) -> Result<Self> {
        if spectrum.is_empty() || spectrum.len() != x_star.len() {
            return Err(invalid("quadratic needs matching, nonempty spectrum and x_star"));
        }
        if spectrum.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
            return Err(invalid("quadratic spectrum entries must be finite and ≥ 0"));
        }
        if spectrum.iter().all(|&s| s == 0.0) {
            return Err(invalid("quadratic spectrum must have a positive entry"));
        }
        Ok(Objective::Quadratic(Quadratic { spectrum, basis: None, x_star, f_star }))
    }

    /// Same spectrum, eigenbasis drawn from a seeded random rotation.
    pub fn rotated_quadratic(spectrum: Vec<f64>, x_star: Vec<f64>, f_star: f64, seed: u64) -> Result<Self> {
        let Objective::Quadratic(mut q) = Self::quadratic(spectrum, x_star, f_star)? else { unreachable!() };
        q.basis = Some(random_orthogonal(q.spectrum.len(), seed));
        Ok(Objective::Quadratic(q))
    }

    /// One-dimensional ½k(x − x⋆)².
    pub fn scalar(curvature: f64, x_star: f64) -> Result<Self> {
        Self::quadratic(vec![curvature], vec![x_star], 0.0)
    }

    pub fn least_squares(m: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if m.nrows() != y.len() || m.ncols() == 0 {
            return Err(invalid("least squares needs M with rows matching y"));
        }
        let svd = checked_svd(&m)?;
        let smax = svd.singular_values.max();
        if !(smax > 0.0) {
            return Err(invalid("least squares matrix is zero"));
        }
        let cutoff = 1e-12 * smax * m.nrows().max(m.ncols()) as f64;
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        let smin_all = svd.singular_values.min();
        let pinv = svd.pseudo_inverse(cutoff).map_err(|e| invalid(e.to_string()))?;
        let residual = (&m * (&pinv * &y) - &y).norm();
        if residual > 1e-10 * (1.0 + y.norm()) {
            return Err(invalid(format!("y is not in range(M): residual {residual:e}")));
        }
        let smin = if rank == m.ncols() { smin_all } else { 0.0 };
        let gram = m.transpose() * &m;
        let rhs = m.transpose() * &y;
        Ok(Objective::LeastSquares(LeastSquares {
            m,
            y,
            gram,
            rhs,
            pinv,
            lipschitz: smax * smax,
            mu: smin * smin,
            rank,
        }))
    }

    /// Random `rows × cols` matrix of the given rank (product of Gaussian
    /// factors) and a right-hand side in its range.
    pub fn random_least_squares(rows: usize, cols: usize, rank: usize, seed: u64) -> Result<Self> {
        if rank == 0 || rank > rows.min(cols) {
            return Err(invalid(format!("rank {rank} impossible for a {rows}×{cols} matrix")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |_, _| crate::rng::standard_normal(&mut rng);
        let scale = 1.0 / (rank as f64).sqrt();
        let left = DMatrix::from_fn(rows, rank, &mut normal) * scale;
        let right = DMatrix::from_fn(rank, cols, &mut normal);
        let m = left * right;
        let x_true = DVector::from_fn(cols, |_, _| normal(0, 0));
        let y = &m * x_true;
        Self::least_squares(m, y)
    }

    /// Log-sum-exp over the pieces ±a_j (rows of `directions`).
    pub fn log_sum_exp(directions: DMatrix<f64>, smoothing: f64, x_star: Vec<f64>, f_star: f64) -> Result<Self> {
        if !(smoothing > 0.0) || directions.ncols() != x_star.len() || directions.nrows() == 0 {
            return Err(invalid("log-sum-exp needs smoothing > 0 and directions matching x_star"));
        }
        let max_row = (0..directions.nrows()).map(|i| directions.row(i).norm_squared()).fold(0.0, f64::max);
        if max_row == 0.0 {
            return Err(invalid("log-sum-exp directions are all zero"));
        }
        let svd = checked_svd(&directions)?;
        let vt = svd.v_t.expect("requested V^T");
        let cutoff = 1e-12 * svd.singular_values.max();
        let dim = x_star.len();
        let mut range = DMatrix::zeros(dim, dim);
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s > cutoff {
                let v = vt.row(i).transpose();
                range += &v * v.transpose();
            }
        }
        let null = DMatrix::identity(dim, dim) - range;
        let null_projector = if null.norm() > 1e-8 { Some(null) } else { None };
        Ok(Objective::LogSumExp(LogSumExp {
            directions,
            smoothing,
            x_star,
            f_star,
            null_projector,
            lipschitz: max_row / smoothing,
        }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic(q) => q.spectrum.len(),
            Objective::LeastSquares(ls) => ls.m.ncols(),
            Objective::LogSumExp(l) => l.x_star.len(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Objective::Quadratic(q) => q.spectrum.iter().cloned().fold(0.0, f64::max),
            Objective::LeastSquares(ls) => ls.lipschitz,
            Objective::LogSumExp(l) => l.lipschitz,
        }
    }

    pub fn strong_mu(&self) -> f64 {
        match self {
            Objective::Quadratic(q) => q.spectrum.iter().cloned().fold(f64::INFINITY, f64::min),
            Objective::LeastSquares(ls) => ls.mu,
            Objective::LogSumExp(_) => 0.0,
        }
    }

    pub fn min_value(&self) -> f64 {
        match self {
            Objective::Quadratic(q) => q.f_star,
            Objective::LeastSquares(_) => 0.0,
            Objective::LogSumExp(l) => l.f_star,
        }
    }

    pub fn rank(&self) -> Option<usize> {
        match self {
            Objective::LeastSquares(ls) => Some(ls.rank),
            _ => None,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Objective::Quadratic(q) => {
                let z = q.diff_in_basis(x);
                0.5 * z.iter().zip(&q.spectrum).map(|(z, s)| s * z * z).sum::<f64>() + q.f_star
            }
            Objective::LeastSquares(ls) => {
                let r = &ls.m * DVector::from_column_slice(x) - &ls.y;
                0.5 * r.norm_squared()
            }
            Objective::LogSumExp(l) => {
                let (log_sum, _) = l.scaled_pieces(x);
                let k = l.directions.nrows() as f64;
                l.smoothing * (log_sum - (2.0 * k).ln()) + l.f_star
            }
        }
    }

    /// f(x) − min f, clamped at zero against rounding.
    pub fn gap(&self, x: &[f64]) -> f64 {
        (self.value(x) - self.min_value()).max(0.0)
    }

    /// Writes ∇f(x) into `out`.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Objective::Quadratic(q) => match &q.basis {
                None => {
                    for i in 0..x.len() {
                        out[i] = q.spectrum[i] * (x[i] - q.x_star[i]);
                    }
                }
                Some(basis) => {
                    let z = q.diff_in_basis(x);
                    let scaled = DVector::from_iterator(z.len(), z.iter().zip(&q.spectrum).map(|(z, s)| z * s));
                    out.copy_from_slice((basis * scaled).as_slice());
                }
            },
            Objective::LeastSquares(ls) => {
                let n = x.len();
                for i in 0..n {
                    let row = ls.gram.row(i);
                    let mut acc = -ls.rhs[i];
                    for j in 0..n {
                        acc += row[j] * x[j];
                    }
                    out[i] = acc;
                }
            }
            Objective::LogSumExp(l) => {
                let (_, weights) = l.scaled_pieces(x);
                out.iter_mut().for_each(|o| *o = 0.0);
                for (j, w) in weights.iter().enumerate() {
                    for (i, o) in out.iter_mut().enumerate() {
                        *o += w * l.directions[(j, i)];
                    }
                }
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g);
        g
    }

    /// Euclidean projection onto argmin f.
    pub fn project_solution(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Objective::Quadratic(q) => {
                if q.spectrum.iter().all(|&s| s > 0.0) {
                    return q.x_star.clone();
                }
                // x⋆ plus the component of x − x⋆ along zero-eigenvalue directions.
                let z = q.diff_in_basis(x);
                let kept: Vec<f64> = z.iter().zip(&q.spectrum).map(|(z, &s)| if s == 0.0 { *z } else { 0.0 }).collect();
                let back = match &q.basis {
                    None => kept,
                    Some(b) => (b * DVector::from_vec(kept)).data.into(),
                };
                back.iter().zip(&q.x_star).map(|(a, b)| a + b).collect()
            }
            Objective::LeastSquares(ls) => {
                let xv = DVector::from_column_slice(x);
                let r = &ls.m * &xv - &ls.y;
                (xv - &ls.pinv * r).data.into()
            }
            Objective::LogSumExp(l) => match &l.null_projector {
                None => l.x_star.clone(),
                Some(p) => {
                    let diff: Vec<f64> = x.iter().zip(&l.x_star).map(|(a, b)| a - b).collect();
                    let moved = p * DVector::from_vec(diff);
                    moved.iter().zip(&l.x_star).map(|(a, b)| a + b).collect()
                }
            },
        }
    }

    pub fn distance_to_solution_set(&self, x: &[f64]) -> f64 {
        let p = self.project_solution(x);
        x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// ⟨∇f(x), y − x⟩ helper used by the convexity checks.
    pub fn linearization(&self, x: &[f64], y: &[f64]) -> f64 {
        let g = self.gradient(x);
        let d: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        self.value(x) + dot(&g, &d)
    }
}

impl LogSumExp {
    // Returns (ln Σ_j 2cosh(z_j), per-direction gradient weights) with
    // z = A(x − x⋆)/s, evaluated with a max shift.
    fn scaled_pieces(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let k = self.directions.nrows();
        let z: Vec<f64> = (0..k)
            .map(|j| {
                (0..x.len()).map(|i| self.directions[(j, i)] * (x[i] - self.x_star[i])).sum::<f64>() / self.smoothing
            })
            .collect();
        let shift = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut total = 0.0;
        let mut odd = Vec::with_capacity(k);
        for &zj in &z {
            let (p, m) = ((zj - shift).exp(), (-zj - shift).exp());
            total += p + m;
            odd.push(p - m);
        }
        let weights = odd.into_iter().map(|o| o / total).collect();
        (shift + total.ln(), weights)
    }
}

/// Spectrum either listed or log-spaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpectrumSpec {
    Explicit(Vec<f64>),
    LogSpaced { lo: f64, hi: f64, dim: usize },
}

impl SpectrumSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            SpectrumSpec::Explicit(v) => v.clone(),
            SpectrumSpec::LogSpaced { lo, hi, dim } => log_spaced(*lo, *hi, *dim),
        }
    }
}

/// Problem description as it appears in an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    Quadratic {
        spectrum: SpectrumSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x_star: Option<Vec<f64>>,
        #[serde(default)]
        f_star: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rotation_seed: Option<u64>,
    },
    LeastSquares {
        rows: usize,
        cols: usize,
        rank: usize,
        seed: u64,
        /// Rescales M so that L = σ_max(M)² takes this value.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
    LogSumExp {
        dim: usize,
        smoothing: f64,
    },
    Scalar {
        curvature: f64,
    },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Objective> {
        match self {
            ProblemSpec::Quadratic { spectrum, x_star, f_star, rotation_seed } => {
                let s = spectrum.values();
                let xs = x_star.clone().unwrap_or_else(|| vec![0.0; s.len()]);
                match rotation_seed {
                    Some(seed) => Objective::rotated_quadratic(s, xs, *f_star, *seed),
                    None => Objective::quadratic(s, xs, *f_star),
                }
            }
            ProblemSpec::LeastSquares { rows, cols, rank, seed, lipschitz } => {
                let f = Objective::random_least_squares(*rows, *cols, *rank, *seed)?;
                match (lipschitz, f) {
                    (None, f) => Ok(f),
                    (Some(l), Objective::LeastSquares(ls)) if *l > 0.0 => {
                        let k = (l / ls.lipschitz).sqrt();
                        Objective::least_squares(ls.m * k, ls.y * k)
                    }
                    (Some(l), _) => Err(invalid(format!("least squares lipschitz must be positive, got {l}"))),
                }
            }
            ProblemSpec::LogSumExp { dim, smoothing } => {
                Objective::log_sum_exp(DMatrix::identity(*dim, *dim), *smoothing, vec![0.0; *dim], 0.0)
            }
            ProblemSpec::Scalar { curvature } => Objective::scalar(*curvature, 0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_examples() {
        let f = Objective::quadratic(vec![1.0], vec![0.0], 0.0).unwrap();
        assert_eq!(f.value(&[3.0]), 4.5);
        assert_eq!(f.gradient(&[3.0]), vec![3.0]);
        assert_eq!(f.distance_to_solution_set(&[3.0]), 3.0);
        let g = Objective::quadratic(vec![1.0, 100.0], vec![0.0, 0.0], 0.0).unwrap();
        assert_eq!((g.lipschitz(), g.strong_mu()), (100.0, 1.0));
        assert!(Objective::quadratic(vec![0.0, 0.0], vec![0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn singular_quadratic_projects_onto_affine_set() {
        let f = Objective::quadratic(vec![2.0, 0.0], vec![1.0, 1.0], 0.5).unwrap();
        assert_eq!(f.project_solution(&[4.0, -3.0]), vec![1.0, -3.0]);
        assert_eq!(f.strong_mu(), 0.0);
    }

    #[test]
    fn least_squares_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let f = Objective::least_squares(m.clone(), DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let p = f.project_solution(&[5.0, 7.0]);
        assert!((p[0] - 1.0).abs() < 1e-14 && (p[1] - 7.0).abs() < 1e-14);
        assert_eq!(f.gradient(&[1.0, 42.0]), vec![0.0, 0.0]);
        assert!((f.distance_to_solution_set(&[5.0, 7.0]) - 4.0).abs() < 1e-14);
        assert_eq!(f.strong_mu(), 0.0);
        assert_eq!(f.min_value(), 0.0);
        assert!(Objective::least_squares(m, DVector::from_vec(vec![1.0, 1.0])).is_err());
    }

    #[test]
    fn random_least_squares_has_requested_rank() {
        let f = Objective::random_least_squares(20, 20, 10, 7).unwrap();
        assert_eq!(f.rank(), Some(10));
        assert_eq!(f.strong_mu(), 0.0);
        let x = vec![0.3; 20];
        let p = f.project_solution(&x);
        assert!(f.gradient(&p).iter().all(|g| g.abs() < 1e-10));
        assert!(f.gap(&p) < 1e-20);
    }

    #[test]
    fn least_squares_rescaling() {
        let spec = ProblemSpec::LeastSquares { rows: 8, cols: 6, rank: 3, seed: 2, lipschitz: Some(0.1) };
        let f = spec.build().unwrap();
        assert!((f.lipschitz() - 0.1).abs() < 1e-12);
        assert_eq!(f.rank(), Some(3));
    }

    #[test]
    fn log_sum_exp_minimum_is_known() {
        let f = ProblemSpec::LogSumExp { dim: 3, smoothing: 0.5 }.build().unwrap();
        assert!(f.value(&[0.0; 3]).abs() < 1e-15);
        assert!(f.gradient(&[0.0; 3]).iter().all(|g| *g == 0.0));
        assert!(f.value(&[0.3, -2.0, 1.0]) > 0.0);
        assert_eq!(f.lipschitz(), 2.0);
        // Far from the minimizer the max shift keeps everything finite.
        assert!(f.value(&[1e4, 0.0, 0.0]).is_finite());
    }

    #[test]
    fn rotated_quadratic_keeps_spectrum() {
        let f = Objective::rotated_quadratic(vec![1.0, 4.0, 9.0], vec![1.0, 2.0, 3.0], 0.0, 3).unwrap();
        assert_eq!(f.value(&[1.0, 2.0, 3.0]), 0.0);
        let g = f.gradient(&[1.0, 2.0, 3.0]);
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn rank_deficient_svd_falls_back_to_jacobi() {
        // Seed 694 hits a wrong bidiagonal SVD; L comes from the Gram eigenvalue 18.1386.
        let f = Objective::random_least_squares(7, 5, 3, 694).unwrap();
        assert_eq!(f.rank(), Some(3));
        assert!((f.lipschitz() - 18.138595059941466).abs() < 1e-9);
        let wide = Objective::random_least_squares(3, 6, 2, 694).unwrap();
        assert_eq!(wide.rank(), Some(2));
    }

    #[test]
    fn jacobi_matches_gram_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = DMatrix::from_fn(9, 4, |_, _| crate::rng::standard_normal(&mut rng));
        let s = jacobi_svd(&m);
        let mut eig: Vec<f64> = (m.transpose() * &m).symmetric_eigen().eigenvalues.iter().map(|e| e.sqrt()).collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in s.singular_values.iter().zip(&eig) {
            assert!((a - b).abs() < 1e-12 * eig[0]);
        }
        let recon = s.u.unwrap() * DMatrix::from_diagonal(&s.singular_values) * s.v_t.unwrap();
        assert!((recon - m).norm() < 1e-12);
    }
}
