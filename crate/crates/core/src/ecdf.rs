//! Continuous piecewise-linear empirical CDF and its inverse.
//!
//! For strictly increasing `z_1 < … < z_n` the CDF is
//! `F(z) = (i − 1 + (z − z_i)/(z_{i+1} − z_i)) / (n − 1)` on `(z_i, z_{i+1}]`,
//! `0` below `z_1` and `1` above `z_n`. The quantile is its exact inverse.
//! Repeated values are separated by a small deterministic perturbation
//! before either function is evaluated.
//!
//! The slice helpers accept a single sample, in which case the quantile is
//! that value and the CDF is a step at it. [`EmpiricalCdf`] itself needs at
//! least two samples.

use crate::error::{check_fraction, Error, Result};

/// Relative gap used to separate repeated values.
pub const TIE_EPS: f64 = 1e-9;

/// Piecewise-linear empirical CDF over strictly increasing support points.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    values: Vec<f64>,
}

impl EmpiricalCdf {
    /// Sorts the samples and breaks ties.
    pub fn build(samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Input(format!(
                "an empirical CDF needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("sample {i} is not finite")));
        }
        let mut values = samples.to_vec();
        sort_and_separate(&mut values);
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cdf(&self, z: f64) -> f64 {
        cdf_sorted(&self.values, z)
    }

    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        check_fraction("quantile level", alpha)?;
        Ok(quantile_sorted(&self.values, alpha))
    }
}

/// Sorts ascending and makes the sequence strictly increasing: each value is
/// raised to at least `TIE_EPS · max(1, |prev|)` above its predecessor.
pub fn sort_and_separate(values: &mut [f64]) {
    values.sort_unstable_by(f64::total_cmp);
    for i in 1..values.len() {
        let prev = values[i - 1];
        let floor = prev + TIE_EPS * prev.abs().max(1.0);
        if values[i] < floor {
            values[i] = floor;
        }
    }
}

/// CDF of a sorted, strictly increasing sequence.
pub fn cdf_sorted(z: &[f64], x: f64) -> f64 {
    let n = z.len();
    if n == 0 || x <= z[0] {
        return 0.0;
    }
    if x > z[n - 1] {
        return 1.0;
    }
    // first index with z[p] >= x; here 1 <= p <= n - 1
    let p = z.partition_point(|v| *v < x);
    let lo = z[p - 1];
    let frac = (x - lo) / (z[p] - lo);
    ((p - 1) as f64 + frac) / (n - 1) as f64
}

/// Quantile of a sorted, strictly increasing sequence; `alpha` must lie in
/// `[0, 1]`. Levels on the grid `i/(n−1)` return `z_{i+1}` exactly.
pub fn quantile_sorted(z: &[f64], alpha: f64) -> f64 {
    let n = z.len();
    debug_assert!(n > 0);
    if n == 1 || alpha <= 0.0 {
        return z[0];
    }
    if alpha >= 1.0 {
        return z[n - 1];
    }
    if let Some(i) = grid_slot(n, alpha) {
        return z[i];
    }
    let pos = alpha * (n - 1) as f64;
    let i = (pos.floor() as usize).min(n - 2);
    z[i] + (z[i + 1] - z[i]) * (pos - i as f64)
}

/// Number of order statistics that lie strictly below the quantile slot at
/// `alpha`; they never exceed the quantile.
pub(crate) fn dominated_count(n: usize, alpha: f64) -> usize {
    if n <= 1 || alpha <= 0.0 {
        return 0;
    }
    if alpha >= 1.0 {
        return n - 1;
    }
    grid_slot(n, alpha).unwrap_or_else(|| (alpha * (n - 1) as f64).floor() as usize + 1)
}

/// Order statistic returned exactly by the quantile at `alpha`, if the level
/// sits on the grid `i/(n−1)` up to rounding.
pub(crate) fn grid_slot(n: usize, alpha: f64) -> Option<usize> {
    if n <= 1 || alpha <= 0.0 {
        return Some(0);
    }
    if alpha >= 1.0 {
        return Some(n - 1);
    }
    let pos = alpha * (n - 1) as f64;
    let nearest = pos.round();
    ((pos - nearest).abs() <= 4.0 * f64::EPSILON * pos.max(1.0)).then_some(nearest as usize)
}

/// Quantile of unsorted samples using `scratch` as working storage.
pub fn quantile_with(samples: &[f64], alpha: f64, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend_from_slice(samples);
    sort_and_separate(scratch);
    quantile_sorted(scratch, alpha)
}

/// Quantile of unsorted samples.
pub fn quantile_of(samples: &[f64], alpha: f64) -> f64 {
    quantile_with(samples, alpha, &mut Vec::with_capacity(samples.len()))
}

/// CDF of unsorted samples evaluated at `x`.
pub fn cdf_of(samples: &[f64], x: f64) -> f64 {
    let mut z = samples.to_vec();
    sort_and_separate(&mut z);
    if z.len() == 1 {
        return if x <= z[0] { 0.0 } else { 1.0 };
    }
    cdf_sorted(&z, x)
}
