//! Epistemic weight sequences that softly discard epistemic outliers.
//!
//! For requirement `k` at design `θ`:
//! 1. each aleatory scenario `i` gets the empirical failure probability
//!    `p_i = 1 − F_{r_k(θ, a_i, ·)}(0)`; the scenarios with
//!    `p_i ≤ quantile(p, 1 − α_a)` form the inlier set `I_a`;
//! 2. `v_j = max_{i ∈ I_a} r_k(θ, a_i, e_j)`, `s = quantile(v, 1 − α_e)` and
//!    `w_j = exp(−γ · max(0, v_j − s))`.

use serde::Serialize;

use crate::ecdf::{cdf_of, quantile_sorted, quantile_with, sort_and_separate};
use crate::error::{check_fraction, Error, Result};
use crate::types::{ProblemSpec, RequirementValues, ScenarioData};

/// Offset of the smooth surrogate `ξ / (ξ + ε)` of `sgn(ξ)`.
pub const SGN_EPS: f64 = 1e-8;

/// Slack above which a scenario counts as relaxed when reporting.
pub const SLACK_ACTIVE: f64 = 1e-6;

/// Weights for one requirement and the threshold that produced them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightSequence {
    pub weights: Vec<f64>,
    pub threshold: f64,
}

impl WeightSequence {
    /// Epistemic scenarios whose weight is numerically zero.
    pub fn vanishing(&self, tol: f64) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w <= tol)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Weights for requirement `k` at design `theta` on the training data.
pub fn compute_weights(
    spec: &ProblemSpec,
    theta: &[f64],
    k: usize,
    data: &ScenarioData,
    alpha_a: f64,
    alpha_e: f64,
    gamma: f64,
) -> Result<WeightSequence> {
    if k >= spec.n_r() {
        return Err(Error::Input(format!("requirement index {k} out of range")));
    }
    let values = RequirementValues::compute(spec, theta, &data.aleatory, &data.epistemic);
    weights_from_values(&values, k, alpha_a, alpha_e, gamma)
}

/// Same rule applied to precomputed requirement values.
pub fn weights_from_values(
    values: &RequirementValues,
    k: usize,
    alpha_a: f64,
    alpha_e: f64,
    gamma: f64,
) -> Result<WeightSequence> {
    check_fraction("alpha_a", alpha_a)?;
    check_fraction("alpha_e", alpha_e)?;
    if !(gamma >= 1.0) {
        return Err(Error::Input(format!("gamma must be at least 1, got {gamma}")));
    }
    let fp = FailureProbabilities::new(values, k);
    let (weights, threshold) = weights_with(values, k, &fp, alpha_a, alpha_e, gamma, &mut Vec::new());
    if weights.is_empty() && values.n_e() > 0 {
        return Err(Error::Internal("empty aleatory inlier set".into()));
    }
    Ok(WeightSequence { weights, threshold })
}

/// Empirical failure probabilities of the pseudo-distributions of one
/// requirement, kept in original and sorted order.
#[derive(Clone, Debug)]
pub(crate) struct FailureProbabilities {
    p: Vec<f64>,
    sorted: Vec<f64>,
}

impl FailureProbabilities {
    pub(crate) fn new(values: &RequirementValues, k: usize) -> Self {
        let p: Vec<f64> = (0..values.n_a())
            .map(|i| 1.0 - cdf_of(values.row(k, i), 0.0))
            .collect();
        let mut sorted = p.clone();
        sort_and_separate(&mut sorted);
        Self { p, sorted }
    }

    /// Aleatory scenarios with the lowest failure probabilities.
    pub(crate) fn inliers(&self, alpha_a: f64) -> Vec<usize> {
        let cut = quantile_sorted(&self.sorted, (1.0 - alpha_a).clamp(0.0, 1.0));
        (0..self.p.len()).filter(|&i| self.p[i] <= cut).collect()
    }
}

/// Weight rule given the failure probabilities of requirement `k`; returns
/// empty weights when the inlier set is empty.
pub(crate) fn weights_with(
    values: &RequirementValues,
    k: usize,
    fp: &FailureProbabilities,
    alpha_a: f64,
    alpha_e: f64,
    gamma: f64,
    scratch: &mut Vec<f64>,
) -> (Vec<f64>, f64) {
    let inliers = fp.inliers(alpha_a);
    if inliers.is_empty() {
        return (Vec::new(), f64::NAN);
    }
    let v: Vec<f64> = (0..values.n_e())
        .map(|j| {
            inliers
                .iter()
                .map(|&i| values.get(k, i, j))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let s = quantile_with(&v, (1.0 - alpha_e).clamp(0.0, 1.0), scratch);
    let w = v.iter().map(|vj| (-gamma * (vj - s).max(0.0)).exp()).collect();
    (w, s)
}

/// Smoothed fraction `Σ sgn(ξ_i) / n_a` used while solving.
pub fn smooth_relaxed_fraction(xi: &[f64]) -> f64 {
    if xi.is_empty() {
        return 0.0;
    }
    let sum: f64 = xi
        .iter()
        .map(|x| {
            let x = x.max(0.0);
            x / (x + SGN_EPS)
        })
        .sum();
    sum / xi.len() as f64
}

/// Exact fraction of slacks above [`SLACK_ACTIVE`], used for reporting.
pub fn relaxed_fraction(xi: &[f64]) -> f64 {
    if xi.is_empty() {
        return 0.0;
    }
    xi.iter().filter(|x| **x > SLACK_ACTIVE).count() as f64 / xi.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Matrix;
    use proptest::prelude::*;

    /// One aleatory scenario whose requirement values equal `v`.
    fn single_row(v: &[f64]) -> RequirementValues {
        let a = Matrix::new(1, 1, vec![0.0]).unwrap();
        let e = Matrix::new(v.len(), 1, v.to_vec()).unwrap();
        RequirementValues::compute_with(&[], &a, &e, 1, |_, _, _, e| e[0])
    }

    #[test]
    fn zero_alpha_e_gives_unit_weights() {
        let vals = single_row(&[0.3, -1.0, 2.0, 0.7]);
        let w = weights_from_values(&vals, 0, 0.0, 0.0, 100.0).unwrap();
        assert_eq!(w.threshold, 2.0);
        assert!(w.weights.iter().all(|w| *w == 1.0));
    }

    #[test]
    fn hand_evaluated_weights() {
        let vals = single_row(&[0.0, 1.0, 5.0]);
        let w = weights_from_values(&vals, 0, 0.0, 0.5, 100.0).unwrap();
        assert_eq!(w.threshold, 1.0);
        assert_eq!(w.weights[0], 1.0);
        assert_eq!(w.weights[1], 1.0);
        assert_eq!(w.weights[2], (-400.0f64).exp());
        assert_eq!(w.vanishing(1e-100), vec![2]);
    }

    #[test]
    fn aleatory_outlier_excluded_from_worst_case() {
        // scenario 1 fails everywhere and is discarded at alpha_a = 1/2
        let a = Matrix::new(2, 1, vec![0.0, 10.0]).unwrap();
        let e = Matrix::new(3, 1, vec![-1.0, -0.5, 0.2]).unwrap();
        let vals = RequirementValues::compute_with(&[], &a, &e, 1, |_, _, a, e| a[0] + e[0]);
        let w = weights_from_values(&vals, 0, 0.5, 0.0, 100.0).unwrap();
        assert_eq!(w.threshold, 0.2);
    }

    #[test]
    fn rejects_bad_parameters() {
        let vals = single_row(&[0.0, 1.0]);
        assert!(weights_from_values(&vals, 0, 1.5, 0.0, 100.0).is_err());
        assert!(weights_from_values(&vals, 0, 0.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn slack_fractions() {
        assert_eq!(relaxed_fraction(&[0.0, 1e-7, 0.5, 2.0]), 0.5);
        let s = smooth_relaxed_fraction(&[0.0, 1.0]);
        assert!((s - 0.5).abs() < 1e-7);
    }

    proptest! {
        #[test]
        fn few_weights_below_one(v in prop::collection::vec(-5.0f64..5.0, 2..40), alpha in 0.0f64..0.99) {
            let vals = single_row(&v);
            let w = weights_from_values(&vals, 0, 0.0, alpha, 100.0).unwrap();
            let below = w.weights.iter().filter(|w| **w < 1.0).count();
            prop_assert!(below <= (v.len() as f64 * alpha).ceil() as usize);
            for (wj, vj) in w.weights.iter().zip(&v) {
                prop_assert!((0.0..=1.0).contains(wj));
                if *vj <= w.threshold {
                    prop_assert_eq!(*wj, 1.0);
                }
            }
        }

        #[test]
        fn invariant_under_aleatory_permutation(
            rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 5), 2..6),
            alpha_a in 0.0f64..0.9,
            alpha_e in 0.0f64..0.9,
        ) {
            let n_a = rows.len();
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let build = |order: &[usize]| {
                let a = Matrix::new(n_a, 1, order.iter().map(|&i| i as f64).collect()).unwrap();
                let e = Matrix::new(5, 1, (0..5).map(|j| j as f64).collect()).unwrap();
                RequirementValues::compute_with(&[], &a, &e, 1, |_, _, a, e| {
                    flat[a[0] as usize * 5 + e[0] as usize]
                })
            };
            let forward: Vec<usize> = (0..n_a).collect();
            let reverse: Vec<usize> = (0..n_a).rev().collect();
            let w1 = weights_from_values(&build(&forward), 0, alpha_a, alpha_e, 50.0).unwrap();
            let w2 = weights_from_values(&build(&reverse), 0, alpha_a, alpha_e, 50.0).unwrap();
            prop_assert_eq!(w1, w2);
        }

        #[test]
        fn sharp_limit_is_indicator(v in prop::collection::vec(-5.0f64..5.0, 2..20), alpha in 0.0f64..0.9) {
            let vals = single_row(&v);
            let w = weights_from_values(&vals, 0, 0.0, alpha, 1e12).unwrap();
            for (wj, vj) in w.weights.iter().zip(&v) {
                let gap = vj - w.threshold;
                prop_assume!(gap <= 0.0 || gap > 1e-9);
                let ind = if gap <= 0.0 { 1.0 } else { 0.0 };
                prop_assert!((wj - ind).abs() < 1e-3);
            }
        }
    }
}
