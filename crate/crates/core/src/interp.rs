//! Shape-preserving piecewise cubic Hermite interpolation (Fritsch–Butland
//! slopes, one-sided three-point end slopes). Monotone data yields a
//! monotone interpolant, so derivative signs survive.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
    // ∫_{x_0}^{x_i} of the interpolant
    cumulative: Vec<f64>,
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(invalid("interpolation table needs at least two (t, value) knots"));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("table knots must be strictly increasing in t"));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(invalid("table knots must be finite"));
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes[0] = delta[0];
            slopes[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                let (d0, d1) = (delta[k - 1], delta[k]);
                if d0 * d1 > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    slopes[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
                }
            }
            slopes[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            slopes[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        let mut cumulative = vec![0.0; n];
        for i in 0..n - 1 {
            // Exact integral of a cubic Hermite segment.
            let seg = h[i] * (ys[i] + ys[i + 1]) / 2.0 + h[i] * h[i] * (slopes[i] - slopes[i + 1]) / 12.0;
            cumulative[i + 1] = cumulative[i] + seg;
        }
        Ok(Self { xs, ys, slopes, cumulative })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    fn locate(&self, x: f64) -> Result<usize> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain { t: x, lo, hi });
        }
        let i = self.xs.partition_point(|&k| k <= x);
        Ok(i.saturating_sub(1).min(self.xs.len() - 2))
    }

    /// Value and derivative at `x`.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        let i = self.locate(x)?;
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let (y0, y1, m0, m1) = (self.ys[i], self.ys[i + 1], self.slopes[i], self.slopes[i + 1]);
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let value = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
        let d00 = 6.0 * s * (s - 1.0);
        let d10 = (1.0 - s) * (1.0 - 3.0 * s);
        let d01 = -d00;
        let d11 = s * (3.0 * s - 2.0);
        let deriv = (d00 * y0 + d01 * y1) / h + d10 * m0 + d11 * m1;
        Ok((value, deriv))
    }

    /// ∫_{x_0}^{x} of the interpolant.
    pub fn integral_from_start(&self, x: f64) -> Result<f64> {
        let i = self.locate(x)?;
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let (y0, y1, m0, m1) = (self.ys[i], self.ys[i + 1], self.slopes[i], self.slopes[i + 1]);
        // Antiderivatives of the Hermite basis on [0, s].
        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        let i00 = s - s3 + s4 / 2.0;
        let i10 = s2 / 2.0 - 2.0 * s3 / 3.0 + s4 / 4.0;
        let i01 = s3 - s4 / 2.0;
        let i11 = s4 / 4.0 - s3 / 3.0;
        let partial = h * (i00 * y0 + i10 * h * m0 + i01 * y1 + i11 * h * m1);
        Ok(self.cumulative[i] + partial)
    }
}
