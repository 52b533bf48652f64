//! Robust Monte Carlo analysis of a fixed design on testing scenarios.
//!
//! For each testing epistemic point `e_j` the requirement values over the
//! testing aleatory set are trimmed to their smallest
//! `⌈n'_a (1 − α'_a)⌉` entries. The failure probability at `e_j` is
//! `p_j = 1 − F(0)` for that trimmed sample, and a confidence interval on
//! `F(0)` widens it. Four summaries come out per requirement:
//!
//! | field | meaning |
//! |---|---|
//! | `range_a` | spread of `p_j` over the epistemic points |
//! | `range_b` | same spread, widened by the aleatory confidence interval |
//! | `point_c` | fraction of epistemic points whose pessimistic `p_j` exceeds `P^max` |
//! | `range_d` | confidence interval on `point_c` |
//!
//! Confidence intervals are exact Clopper–Pearson intervals on the effective
//! count `n · F(x)`, where `F` is the interpolated empirical CDF. They are
//! two-sided at level `σ`, except that a count of `0` or `n` yields the
//! one-sided bound at level `σ` on the open side.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::ecdf::{cdf_of, quantile_with};
use crate::error::{check_dim, check_fraction, Error, Result};
use crate::types::{Matrix, ProblemSpec, ScenarioData};

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// True when `self` lies inside `other`, up to `tol`.
    pub fn within(&self, other: &Interval, tol: f64) -> bool {
        other.lo <= self.lo + tol && self.hi <= other.hi + tol
    }

    fn complement(self) -> Self {
        Self::new(1.0 - self.hi, 1.0 - self.lo)
    }
}

/// Parameters of an analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmcConfig {
    /// Fraction of aleatory testing scenarios trimmed per requirement.
    pub alpha_a_prime: Vec<f64>,
    /// Fraction of epistemic testing scenarios trimmed per requirement.
    pub alpha_e_prime: Vec<f64>,
    /// Confidence level of every interval.
    pub sigma: f64,
    /// Acceptable failure probability per requirement.
    pub p_max: Vec<f64>,
    /// Analyze the worst-case requirement instead of each one.
    #[serde(default)]
    pub total_failure: bool,
}

impl RmcConfig {
    /// No trimming, the same `p_max` for all `n_r` requirements.
    pub fn new(n_r: usize, sigma: f64, p_max: f64) -> Self {
        Self {
            alpha_a_prime: vec![0.0; n_r],
            alpha_e_prime: vec![0.0; n_r],
            sigma,
            p_max: vec![p_max; n_r],
            total_failure: false,
        }
    }

    pub fn with_total_failure(mut self) -> Self {
        self.total_failure = true;
        self
    }

    /// Number of analyzed requirement functions.
    fn n_out(&self, spec: &ProblemSpec) -> usize {
        if self.total_failure {
            1
        } else {
            spec.n_r()
        }
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        let n = self.n_out(spec);
        check_dim("alpha_a_prime", n, self.alpha_a_prime.len())?;
        check_dim("alpha_e_prime", n, self.alpha_e_prime.len())?;
        check_dim("p_max", n, self.p_max.len())?;
        for &a in self.alpha_a_prime.iter().chain(&self.alpha_e_prime) {
            check_fraction("trimming fraction", a)?;
        }
        for &p in &self.p_max {
            check_fraction("p_max", p)?;
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::Input(format!("sigma must lie in (0, 1), got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Results for one requirement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RequirementReport {
    pub range_a: Interval,
    pub range_b: Interval,
    pub point_c: f64,
    pub range_d: Interval,
    /// Failure probability estimate at each testing epistemic point.
    pub failure_probabilities: Vec<f64>,
}

/// Results of an analysis; one entry per requirement, or a single entry for
/// the worst-case requirement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RmcReport {
    pub requirements: Vec<RequirementReport>,
    pub total_failure: bool,
    pub sigma: f64,
    pub n_a_test: usize,
    pub n_e_test: usize,
}

// ---------------------------------------------------------------------------
// confidence intervals

/// Inverse of the regularized incomplete beta function by bisection.
fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Clopper–Pearson interval for a proportion with (possibly fractional)
/// `count` successes in `n` trials.
pub fn clopper_pearson(count: f64, n: usize, sigma: f64) -> Result<Interval> {
    if n == 0 {
        return Err(Error::Input("a confidence interval needs at least one trial".into()));
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::Input(format!("sigma must lie in (0, 1), got {sigma}")));
    }
    let nf = n as f64;
    if !(0.0..=nf).contains(&count) {
        return Err(Error::Input(format!("count {count} outside [0, {n}]")));
    }
    let miss = 1.0 - sigma;
    if count == 0.0 {
        return Ok(Interval::new(0.0, 1.0 - miss.powf(1.0 / nf)));
    }
    if count == nf {
        return Ok(Interval::new(miss.powf(1.0 / nf), 1.0));
    }
    let lo = beta_quantile(count, nf - count + 1.0, 0.5 * miss);
    let hi = beta_quantile(count + 1.0, nf - count, 1.0 - 0.5 * miss);
    Ok(Interval::new(lo, hi))
}

/// Confidence interval on the CDF of `samples` evaluated at `x`.
pub fn cdf_confidence_interval(samples: &[f64], x: f64, sigma: f64) -> Result<Interval> {
    let f = cdf_of(samples, x);
    clopper_pearson(f * samples.len() as f64, samples.len(), sigma)
}

// ---------------------------------------------------------------------------
// analysis

/// Statistics of the trimmed sample at one epistemic point.
#[derive(Clone, Copy, Debug)]
struct PointStats {
    /// `1 − F(0)`.
    p: f64,
    /// Confidence interval on `F(0)`.
    ci: Interval,
}

/// Number of kept entries when trimming a fraction `alpha` of `n`, rounding
/// the kept count up (`ceil`) or down.
fn kept(n: usize, alpha: f64, ceil: bool) -> usize {
    let x = n as f64 * (1.0 - alpha);
    // keep exact products such as 200 · 0.95 from drifting across an integer
    let r = x.round();
    if (x - r).abs() < 1e-9 * x.max(1.0) {
        r as usize
    } else if ceil {
        x.ceil() as usize
    } else {
        x.floor() as usize
    }
}

/// Smallest `m` entries of `v`.
fn smallest(mut v: Vec<f64>, m: usize) -> Vec<f64> {
    v.sort_unstable_by(f64::total_cmp);
    v.truncate(m);
    v
}

/// Per-requirement, per-epistemic-point statistics; layout `[k][j]`.
fn point_stats(spec: &ProblemSpec, theta: &[f64], data: &ScenarioData, cfg: &RmcConfig) -> Result<Vec<Vec<PointStats>>> {
    data.validate(spec)?;
    cfg.validate(spec)?;
    if theta.len() != spec.m_theta() {
        return Err(Error::Dimension {
            what: "design vector",
            expected: spec.m_theta(),
            got: theta.len(),
        });
    }
    let (a_test, e_test): (&Matrix, &Matrix) = data.testing()?;
    let (n_a, n_e) = (a_test.rows(), e_test.rows());
    if n_a < 2 || n_e < 2 {
        return Err(Error::Input(format!(
            "testing sets need at least 2 scenarios each, got {n_a} aleatory and {n_e} epistemic"
        )));
    }
    let n_out = cfg.n_out(spec);
    let keep: Vec<usize> = cfg.alpha_a_prime.iter().map(|&a| kept(n_a, a, true)).collect();
    if let Some(k) = keep.iter().position(|&m| m == 0) {
        return Err(Error::Input(format!("trimming leaves no aleatory scenario for requirement {k}")));
    }
    let per_point: Vec<Vec<PointStats>> = (0..n_e)
        .into_par_iter()
        .map(|j| {
            let e = e_test.row(j);
            (0..n_out)
                .map(|k| {
                    let values: Vec<f64> = a_test
                        .iter_rows()
                        .map(|a| {
                            if cfg.total_failure {
                                spec.r_max_unchecked(theta, a, e)
                            } else {
                                spec.requirement(k, theta, a, e)
                            }
                        })
                        .collect();
                    let trimmed = smallest(values, keep[k]);
                    let f = cdf_of(&trimmed, 0.0);
                    let ci = clopper_pearson(f * trimmed.len() as f64, trimmed.len(), cfg.sigma)?;
                    Ok(PointStats { p: 1.0 - f, ci })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    if per_point.iter().flatten().any(|s| !s.p.is_finite()) {
        return Err(Error::Numerical("non-finite requirement value on the testing set".into()));
    }
    Ok((0..n_out)
        .map(|k| per_point.iter().map(|row| row[k]).collect())
        .collect())
}

/// Quantile of a sequence of probabilities. The tie rule may lift repeated
/// values by a few ulps-scale steps; the result is kept within the sample.
fn probability_quantile(p: &[f64], level: f64) -> f64 {
    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    quantile_with(p, level, &mut Vec::with_capacity(p.len())).min(max)
}

fn range_a_of(stats: &[PointStats], alpha_e: f64) -> (Vec<f64>, Interval) {
    let p: Vec<f64> = stats.iter().map(|s| s.p).collect();
    let range = Interval::new(probability_quantile(&p, 0.0), probability_quantile(&p, 1.0 - alpha_e));
    (p, range)
}

fn range_b_of(stats: &[PointStats], alpha_e: f64) -> Interval {
    let max_upper = stats.iter().map(|s| s.ci.hi).fold(f64::NEG_INFINITY, f64::max);
    let d: Vec<f64> = stats.iter().map(|s| 1.0 - s.ci.lo).collect();
    Interval::new(1.0 - max_upper, probability_quantile(&d, 1.0 - alpha_e))
}

fn violation_of(stats: &[PointStats], alpha_e: f64, p_max: f64, sigma: f64) -> Result<(f64, Interval)> {
    let q: Vec<f64> = stats.iter().map(|s| 1.0 - s.ci.lo).collect();
    let m = kept(q.len(), alpha_e, false);
    if m == 0 {
        return Err(Error::Input("trimming leaves no epistemic scenario".into()));
    }
    let q = smallest(q, m);
    let c = 1.0 - cdf_of(&q, p_max);
    let d = cdf_confidence_interval(&q, p_max, sigma)?.complement();
    Ok((c, d))
}

/// Range of failure probabilities over the testing epistemic points.
pub fn failure_prob_range(spec: &ProblemSpec, theta: &[f64], data: &ScenarioData, cfg: &RmcConfig) -> Result<Vec<Interval>> {
    let stats = point_stats(spec, theta, data, cfg)?;
    Ok(stats
        .iter()
        .zip(&cfg.alpha_e_prime)
        .map(|(s, &a)| range_a_of(s, a).1)
        .collect())
}

/// Failure probability range widened by the aleatory confidence intervals.
pub fn ci_range(spec: &ProblemSpec, theta: &[f64], data: &ScenarioData, cfg: &RmcConfig) -> Result<Vec<Interval>> {
    let stats = point_stats(spec, theta, data, cfg)?;
    Ok(stats
        .iter()
        .zip(&cfg.alpha_e_prime)
        .map(|(s, &a)| range_b_of(s, a))
        .collect())
}

/// Estimated probability of violating the robustness specification and its
/// confidence interval.
pub fn spec_violation(spec: &ProblemSpec, theta: &[f64], data: &ScenarioData, cfg: &RmcConfig) -> Result<Vec<(f64, Interval)>> {
    let stats = point_stats(spec, theta, data, cfg)?;
    stats
        .iter()
        .enumerate()
        .map(|(k, s)| violation_of(s, cfg.alpha_e_prime[k], cfg.p_max[k], cfg.sigma))
        .collect()
}

/// Full analysis in a single pass over the testing grid.
pub fn analyze(spec: &ProblemSpec, theta: &[f64], data: &ScenarioData, cfg: &RmcConfig) -> Result<RmcReport> {
    let stats = point_stats(spec, theta, data, cfg)?;
    let (a_test, e_test) = data.testing()?;
    let requirements = stats
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let alpha_e = cfg.alpha_e_prime[k];
            let (failure_probabilities, range_a) = range_a_of(s, alpha_e);
            let range_b = range_b_of(s, alpha_e);
            let (point_c, range_d) = violation_of(s, alpha_e, cfg.p_max[k], cfg.sigma)?;
            Ok(RequirementReport {
                range_a,
                range_b,
                point_c,
                range_d,
                failure_probabilities,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RmcReport {
        requirements,
        total_failure: cfg.total_failure,
        sigma: cfg.sigma,
        n_a_test: a_test.rows(),
        n_e_test: e_test.rows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Bounds;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    /// `r = a − e − θ`: the failure probability at `e` is the fraction of
    /// aleatory samples above `e + θ`.
    fn shift_spec() -> ProblemSpec {
        ProblemSpec::new(
            "shift",
            Arc::new(|t: &[f64]| t[0]),
            vec![Arc::new(|t: &[f64], a: &[f64], e: &[f64]| a[0] - e[0] - t[0])],
            Bounds::new(vec![-10.0], vec![10.0]).unwrap(),
            1,
            1,
        )
        .unwrap()
    }

    fn column(v: &[f64]) -> Matrix {
        Matrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    fn data_with(a: &[f64], e: &[f64]) -> ScenarioData {
        ScenarioData::new(column(&[0.0, 1.0]), column(&[0.0, 1.0]))
            .unwrap()
            .with_testing(column(a), column(e))
            .unwrap()
    }

    #[test]
    fn zero_failure_bound_is_closed_form() {
        let ci = clopper_pearson(0.0, 100, 0.95).unwrap();
        assert_eq!(ci.lo, 0.0);
        assert_relative_eq!(ci.hi, 1.0 - 0.05f64.powf(0.01), max_relative = 1e-14);
        assert!((ci.hi - 0.0295).abs() < 1e-4);
        let full = clopper_pearson(100.0, 100, 0.95).unwrap();
        assert_relative_eq!(full.lo, 0.05f64.powf(0.01), max_relative = 1e-14);
    }

    /// Reference values from an independent beta-quantile implementation.
    #[test]
    fn two_sided_interval_matches_reference() {
        let ci = clopper_pearson(3.0, 20, 0.95).unwrap();
        assert_relative_eq!(ci.lo, 0.032070937185464, max_relative = 1e-9);
        assert_relative_eq!(ci.hi, 0.378926826545314, max_relative = 1e-9);
        let ci = clopper_pearson(50.0, 1000, 0.9).unwrap();
        assert_relative_eq!(ci.lo, 0.039163535925589, max_relative = 1e-9);
        assert_relative_eq!(ci.hi, 0.062863403512380, max_relative = 1e-9);
    }

    #[test]
    fn rejects_bad_interval_input() {
        assert!(clopper_pearson(1.0, 0, 0.95).is_err());
        assert!(clopper_pearson(5.0, 4, 0.95).is_err());
        assert!(clopper_pearson(1.0, 4, 1.0).is_err());
    }

    #[test]
    fn fully_successful_design_has_zero_range() {
        let spec = shift_spec();
        let data = data_with(&[-3.0, -2.0, -1.0], &[0.0, 0.5, 1.0]);
        // three aleatory samples bound the failure probability by 1 − 0.05^(1/3) ≈ 0.63
        let cfg = RmcConfig::new(1, 0.95, 0.7);
        let r = analyze(&spec, &[0.0], &data, &cfg).unwrap();
        let req = &r.requirements[0];
        assert_eq!(req.range_a, Interval::new(0.0, 0.0));
        assert_eq!(req.point_c, 0.0);
        assert_eq!(req.range_d.lo, 0.0);
        assert_relative_eq!(req.range_d.hi, 1.0 - 0.05f64.powf(1.0 / 3.0), max_relative = 1e-14);
        assert_relative_eq!(req.range_b.hi, 1.0 - 0.05f64.powf(1.0 / 3.0), max_relative = 1e-14);
    }

    #[test]
    fn range_spans_extreme_failure_probabilities() {
        // values a − e: e = 0.5 fails on 1 of 4 samples, e = 3.5 on none
        let spec = shift_spec();
        let data = data_with(&[0.0, 1.0, 2.0, 3.0], &[2.5, 3.5, 1.5]);
        let r = failure_prob_range(&spec, &[0.0], &data, &RmcConfig::new(1, 0.95, 0.01)).unwrap();
        let p = |shift: f64| 1.0 - cdf_of(&[0.0 - shift, 1.0 - shift, 2.0 - shift, 3.0 - shift], 0.0);
        assert_eq!(r[0], Interval::new(p(3.5), p(1.5)));
    }

    #[test]
    fn full_quantile_upper_limit_is_max() {
        let stats: Vec<PointStats> = [0.0, 0.1, 0.5]
            .iter()
            .map(|&p| PointStats { p, ci: Interval::new(1.0 - p, 1.0 - p) })
            .collect();
        let (_, a) = range_a_of(&stats, 0.0);
        assert_eq!(a, Interval::new(0.0, 0.5));
    }

    #[test]
    fn violation_point_estimate_by_hand() {
        let stats: Vec<PointStats> = [0.001, 0.02, 0.5]
            .iter()
            .map(|&q| PointStats { p: q, ci: Interval::new(1.0 - q, 1.0) })
            .collect();
        let (c, d) = violation_of(&stats, 0.0, 0.01, 0.95).unwrap();
        // F(0.01) = (0 + 0.009 / 0.019) / 2
        assert_relative_eq!(c, 1.0 - 0.009 / 0.019 / 2.0, max_relative = 1e-12);
        assert!(d.contains(c));
    }

    #[test]
    fn trimming_counts() {
        assert_eq!(kept(200, 0.05, false), 190);
        assert_eq!(kept(49, 0.5, true), 25);
        assert_eq!(kept(49, 0.5, false), 24);
        assert_eq!(kept(10, 1.0, true), 0);
    }

    #[test]
    fn trimming_removes_failing_samples() {
        let spec = shift_spec();
        let data = data_with(&[-3.0, -2.0, -1.0, 5.0], &[0.0, 0.5]);
        let mut cfg = RmcConfig::new(1, 0.95, 0.01);
        assert!(failure_prob_range(&spec, &[0.0], &data, &cfg).unwrap()[0].hi > 0.0);
        cfg.alpha_a_prime = vec![0.25];
        assert_eq!(failure_prob_range(&spec, &[0.0], &data, &cfg).unwrap()[0].hi, 0.0);
        cfg.alpha_a_prime = vec![1.0];
        assert!(failure_prob_range(&spec, &[0.0], &data, &cfg).is_err());
    }

    #[test]
    fn requires_testing_data() {
        let spec = shift_spec();
        let data = ScenarioData::new(column(&[0.0, 1.0]), column(&[0.0, 1.0])).unwrap();
        assert!(analyze(&spec, &[0.0], &data, &RmcConfig::new(1, 0.95, 0.01)).is_err());
    }

    #[test]
    fn collapsed_epistemic_set_gives_constant_probabilities() {
        let spec = shift_spec();
        let data = data_with(&[-1.0, 0.3, 0.7, 2.0, -0.4], &[0.2, 0.2, 0.2]);
        let r = analyze(&spec, &[0.0], &data, &RmcConfig::new(1, 0.95, 0.01)).unwrap();
        let req = &r.requirements[0];
        assert!(req.failure_probabilities.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-8));
        assert!((req.range_a.lo - req.range_a.hi).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn interval_brackets_estimate(count in 0u32..=60, n in 1usize..60, sigma in 0.5f64..0.999) {
            let c = f64::from(count).min(n as f64);
            let ci = clopper_pearson(c, n, sigma).unwrap();
            prop_assert!(0.0 <= ci.lo && ci.lo <= c / n as f64 + 1e-12);
            prop_assert!(c / n as f64 <= ci.hi + 1e-12 && ci.hi <= 1.0);
        }

        #[test]
        fn range_a_nested_in_range_b(
            a in prop::collection::vec(-3.0f64..3.0, 2..40),
            e in prop::collection::vec(-1.0f64..1.0, 2..12),
            alpha_e in 0.0f64..0.5,
        ) {
            let spec = shift_spec();
            let data = data_with(&a, &e);
            let mut cfg = RmcConfig::new(1, 0.95, 0.01);
            cfg.alpha_e_prime = vec![alpha_e];
            let r = analyze(&spec, &[0.0], &data, &cfg).unwrap();
            let req = &r.requirements[0];
            prop_assert!(req.range_a.within(&req.range_b, 1e-12));
            prop_assert!(req.range_d.lo <= req.range_d.hi);
            prop_assert!(0.0 <= req.range_b.lo && req.range_b.hi <= 1.0);
        }
    }
}
