//! Small numerical helpers: mergeable running moments, least-squares lines,
//! and a Wald-Wolfowitz runs test for residual trends.

use serde::{Deserialize, Serialize};

use crate::error::{ReadoutError, Result};

/// Mean and variance accumulator (Welford) that merges deterministically.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / total as f64;
        self.m2 += other.m2 + d * d * (self.count as f64 * other.count as f64) / total as f64;
        self.count = total;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.m2 / (self.count - 1) as f64
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Means and the full sample covariance of a fixed-length vector observation.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceAccumulator {
    count: u64,
    mean: Vec<f64>,
    comoment: Vec<f64>,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        CovarianceAccumulator {
            count: 0,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) {
        let dim = self.dim();
        assert_eq!(x.len(), dim);
        self.count += 1;
        let c = self.count as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d / c;
        }
        for i in 0..dim {
            let after = x[i] - self.mean[i];
            for j in 0..dim {
                self.comoment[i * dim + j] += after * delta[j];
            }
        }
    }

    pub fn merge(&mut self, other: &CovarianceAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let dim = self.dim();
        let (na, nb) = (self.count as f64, other.count as f64);
        let total = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for i in 0..dim {
            for j in 0..dim {
                self.comoment[i * dim + j] +=
                    other.comoment[i * dim + j] + delta[i] * delta[j] * na * nb / total;
            }
        }
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d * nb / total;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.comoment[i * self.dim() + j] / (self.count - 1) as f64
    }

    /// Variance of the mean of `Σ_k w_k x_k`.
    pub fn weighted_mean_variance(&self, weights: &[(usize, f64)]) -> f64 {
        let mut v = 0.0;
        for &(i, wi) in weights {
            for &(j, wj) in weights {
                v += wi * wj * self.covariance(i, j);
            }
        }
        v / self.count as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
}

/// Ordinary least squares weights: `slope = Σ_k w_k y_k`.
pub fn slope_weights(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 3 {
        return Err(ReadoutError::IllConditioned(format!(
            "{} points, need at least 3",
            x.len()
        )));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let sxx: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    if !(sxx > 0.0) {
        return Err(ReadoutError::IllConditioned("abscissae are all equal".into()));
    }
    Ok(x.iter().map(|v| (v - mean) / sxx).collect())
}

/// Unweighted least squares with standard errors from the residual scatter.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    fit_line_weighted(x, y, None)
}

/// Least squares line. With `sigma`, points are weighted by `1/σ²` and the
/// parameter errors come from those `σ`; otherwise from the residuals.
pub fn fit_line_weighted(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<LineFit> {
    if x.len() != y.len() || sigma.is_some_and(|s| s.len() != x.len()) {
        return Err(ReadoutError::IllConditioned("length mismatch".into()));
    }
    let k = x.len();
    if k < 2 || (sigma.is_none() && k < 3) {
        return Err(ReadoutError::IllConditioned(format!("{k} points is too few")));
    }
    let w: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|v| 1.0 / (v * v)).collect(),
        None => vec![1.0; k],
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(ReadoutError::IllConditioned("zero or invalid sigma".into()));
    }
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = w.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(a, b)| a * (b - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(ReadoutError::IllConditioned("abscissae are all equal".into()));
    }
    let sxy: f64 = (0..k).map(|i| w[i] * (x[i] - xm) * (y[i] - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let scale = match sigma {
        Some(_) => 1.0,
        None => {
            let rss: f64 = (0..k)
                .map(|i| (y[i] - intercept - slope * x[i]).powi(2))
                .sum();
            rss / (k - 2) as f64
        }
    };
    let slope_var = scale / sxx;
    let intercept_var = scale * (1.0 / sw + xm * xm / sxx);
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr: slope_var.sqrt(),
        intercept_stderr: intercept_var.sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunsTest {
    pub runs: usize,
    pub expected: f64,
    pub z: f64,
    /// True when the sign sequence is consistent with randomness at 5%.
    pub random: bool,
}

/// Wald-Wolfowitz runs test on the signs of `residuals` (zeros dropped).
pub fn runs_test(residuals: &[f64]) -> Result<RunsTest> {
    let signs: Vec<bool> = residuals.iter().filter(|r| **r != 0.0).map(|r| *r > 0.0).collect();
    let pos = signs.iter().filter(|s| **s).count() as f64;
    let neg = signs.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(ReadoutError::IllConditioned(
            "residuals all share one sign".into(),
        ));
    }
    let runs = 1 + signs.windows(2).filter(|w| w[0] != w[1]).count();
    let total = pos + neg;
    let expected = 2.0 * pos * neg / total + 1.0;
    let variance = 2.0 * pos * neg * (2.0 * pos * neg - total) / (total * total * (total - 1.0));
    let z = (runs as f64 - expected) / variance.sqrt();
    Ok(RunsTest {
        runs,
        expected,
        z,
        random: z.abs() < 1.959_963_984_540_054,
    })
}
