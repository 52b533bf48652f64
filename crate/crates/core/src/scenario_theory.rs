//! Distribution-free risk bounds for scenario designs.
//!
//! A training scenario counts towards the set-complexity `s_E` when it is a
//! support scenario (dropping it moves the optimal design) or when some
//! epistemic point of `E` makes it fail. The bound `ε̄(s_E)` holds with
//! confidence `1 − β` for IID training data from a continuous distribution.
//!
//! `ε̄(k) = 1 − t̲(k)`, where `t̲(k)` is the smaller root in `[0, 1]` of
//!
//! ```text
//! C(n,k) t^(n−k) − β/(2n) Σ_{i=k}^{n−1} C(i,k) t^(i−k) − β/(6n) Σ_{i=n+1}^{4n} C(i,k) t^(i−k)
//! ```
//!
//! Every term is evaluated in log space, so large `n` does not overflow.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::nlp::{latin_hypercube, minimize, NlpModel, NlpOptions, NlpProblem, SolverStatus};
use crate::programs::{solve, Formulation, SolveOptions};
use crate::types::{AlphaConfig, Bounds, EpistemicSet, Matrix, ProblemSpec, ScenarioData, SetNorm};

/// Minimum change of the design, in max-norm, that makes a scenario a
/// support scenario. Must stay above the solver tolerance.
pub const TOL_SUPPORT: f64 = 1e-4;

/// Violation margin required of the point found by the optimization test.
pub const DELTA_ACT: f64 = 1e-8;

/// The optimization test searches `E` scaled about its center by this factor.
pub const SEARCH_SCALE: f64 = 2.0;

/// Largest epistemic dimension for which the optimization test is the default.
pub const AUTO_OPT_MAX_DIM: usize = 10;

/// Candidate points screened per start of the containment search.
const START_POOL: usize = 16;

// ---------------------------------------------------------------------------
// risk bound

/// `ln C(i, k)` for `i = k..=i_max`, built by recurrence.
fn log_binomials(k: usize, i_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(i_max - k + 1);
    let mut acc = 0.0;
    out.push(acc);
    for i in k..i_max {
        // C(i+1, k) / C(i, k) = (i+1) / (i+1−k)
        acc += (k as f64 / (i + 1 - k) as f64).ln_1p();
        out.push(acc);
    }
    out
}

/// Log-space residual of the bound polynomial, `ln(positive) − ln(negative)`.
struct BoundPolynomial {
    n: usize,
    k: usize,
    log_c: Vec<f64>,
    log_w_low: f64,
    log_w_high: f64,
}

impl BoundPolynomial {
    fn new(n: usize, k: usize, beta: f64) -> Self {
        let nf = n as f64;
        Self {
            n,
            k,
            log_c: log_binomials(k, 4 * n),
            log_w_low: (beta / (2.0 * nf)).ln(),
            log_w_high: (beta / (6.0 * nf)).ln(),
        }
    }

    fn residual(&self, t: f64) -> f64 {
        let (n, k) = (self.n, self.k);
        let lt = t.ln();
        let pos = self.log_c[n - k] + (n - k) as f64 * lt;
        let terms = (k..n)
            .map(|i| self.log_w_low + self.log_c[i - k] + (i - k) as f64 * lt)
            .chain((n + 1..=4 * n).map(|i| self.log_w_high + self.log_c[i - k] + (i - k) as f64 * lt));
        let terms: Vec<f64> = terms.collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let neg = max + terms.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        pos - neg
    }
}

/// Residual of the bound polynomial at `t`, as the difference of the logs of
/// its positive and negative parts. Zero at a root.
pub fn risk_bound_residual(n: usize, k: usize, beta: f64, t: f64) -> f64 {
    BoundPolynomial::new(n, k, beta).residual(t)
}

/// Increasing grid on `(0, 1)`, dense near both ends.
fn scan_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=600).map(|s| 10f64.powf(-30.0 + 0.05 * s as f64)).filter(|t| *t < 0.5).collect();
    grid.extend((0..=300).map(|s| 1.0 - 10f64.powf(-std::f64::consts::LOG10_2 - 0.05 * s as f64)));
    grid.retain(|t| *t > 0.0 && *t < 1.0);
    grid
}

/// Upper bound `ε̄(k)` on the set-risk of a design with set-complexity `k`
/// from `n` training scenarios, holding with confidence `1 − β`.
pub fn epsilon_bar(n: usize, k: usize, beta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Input("the bound needs at least one scenario".into()));
    }
    if k > n {
        return Err(Error::Input(format!("complexity {k} exceeds the {n} scenarios")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Input(format!("beta must lie in (0, 1), got {beta}")));
    }
    if k == n {
        return Ok(1.0);
    }
    let poly = BoundPolynomial::new(n, k, beta);
    // the residual is negative near 0; the first sign change brackets the smaller root
    let grid = scan_grid();
    let mut lo = 0.0;
    let mut hi = None;
    for &t in &grid {
        if poly.residual(t) > 0.0 {
            hi = Some(t);
            break;
        }
        lo = t;
    }
    let Some(mut hi) = hi else {
        return Err(Error::Numerical(format!(
            "no root of the bound polynomial found in (0, 1) for n = {n}, k = {k}, beta = {beta}"
        )));
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if poly.residual(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((1.0 - 0.5 * (lo + hi)).clamp(0.0, 1.0))
}

// ---------------------------------------------------------------------------
// support scenarios

/// Maps training data to an optimal design.
pub type DesignSolver<'a> = dyn Fn(&ScenarioData) -> Result<Vec<f64>> + Sync + 'a;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Aleatory scenarios whose removal moves the design `theta_star` by more
/// than `tol` in max-norm.
pub fn support_given(solver: &DesignSolver<'_>, data: &ScenarioData, theta_star: &[f64], tol: f64) -> Result<Vec<usize>> {
    let designs: Vec<Vec<f64>> = (0..data.n_a())
        .into_par_iter()
        .map(|i| {
            let theta = solver(&data.without_aleatory(i))
                .map_err(|e| Error::Solver(format!("leave-one-out solve without scenario {i} failed: {e}")))?;
            check_dim("leave-one-out design", theta_star.len(), theta.len())?;
            Ok(theta)
        })
        .collect::<Result<_>>()?;
    let reference = consensus(&designs, theta_star, tol);
    Ok(designs
        .iter()
        .enumerate()
        .filter(|(_, t)| max_abs_diff(t, reference) > tol)
        .map(|(i, _)| i)
        .collect())
}

/// Design that non-support removals reproduce. This is `theta_star` unless a
/// strict majority of the leave-one-out designs agree with each other but
/// not with it, which happens when the solver stops short of its tolerance
/// on nonsmooth programs: removing an inactive scenario then reproduces the
/// same inexact design every time.
fn consensus<'a>(designs: &'a [Vec<f64>], theta_star: &'a [f64], tol: f64) -> &'a [f64] {
    let agree = |t: &[f64]| designs.iter().filter(|d| max_abs_diff(d, t) <= tol).count();
    if 2 * agree(theta_star) > designs.len() {
        return theta_star;
    }
    let best = designs
        .iter()
        .map(|d| (agree(d), d))
        .max_by_key(|(n, _)| *n);
    match best {
        Some((n, d)) if 2 * n > designs.len() => {
            log::warn!("leave-one-out designs agree on a point {:.2e} away from the reported design", max_abs_diff(d, theta_star));
            d
        }
        _ => theta_star,
    }
}

/// Support scenarios of the program behind `solver`, found by leaving each
/// aleatory scenario out in turn.
pub fn support_scenarios(solver: &DesignSolver<'_>, data: &ScenarioData) -> Result<Vec<usize>> {
    let theta = solver(data)?;
    support_given(solver, data, &theta, TOL_SUPPORT)
}

/// Solver closure for a scenario program. Each solve is warm-started from
/// `warm`, typically the design found on the full data. When the data hold
/// fewer aleatory scenarios than `n_a_ref`, the aleatory fractions are
/// rescaled so that the permitted number of aleatory outliers stays fixed.
pub fn program_solver<'a>(
    formulation: &'a Formulation,
    spec: &'a ProblemSpec,
    cfg: &'a AlphaConfig,
    opts: &'a SolveOptions,
    warm: Option<Vec<f64>>,
    n_a_ref: usize,
) -> impl Fn(&ScenarioData) -> Result<Vec<f64>> + Sync + 'a {
    move |data: &ScenarioData| {
        let mut opts = opts.clone();
        if let Some(w) = &warm {
            opts.theta_starts.insert(0, w.clone());
        }
        let cfg = rescale_alpha_a(cfg, n_a_ref, data.n_a());
        Ok(solve(formulation, spec, data, &cfg, &opts)?.theta_star)
    }
}

/// Fractions giving the same outlier count `α (n − 1)` on `n_new` scenarios.
fn rescale_alpha_a(cfg: &AlphaConfig, n_ref: usize, n_new: usize) -> AlphaConfig {
    let mut cfg = cfg.clone();
    if n_new != n_ref && n_new >= 2 && n_ref >= 2 {
        let ratio = (n_ref - 1) as f64 / (n_new - 1) as f64;
        for a in &mut cfg.alpha_a {
            *a = (*a * ratio).min(1.0);
        }
    }
    cfg
}

// ---------------------------------------------------------------------------
// containment tests

/// Outcome of a containment test for one aleatory point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContainmentVerdict {
    /// Some epistemic point of `E` makes the design fail.
    Violated,
    /// No failing point exists within the searched region.
    Contained,
    /// No failing probe was found.
    ProbablyContained,
}

impl ContainmentVerdict {
    pub fn is_violated(self) -> bool {
        self == ContainmentVerdict::Violated
    }
}

/// Which containment test to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContainmentTest {
    Sampling,
    Optimization,
    /// Optimization when `m_e` is small, sampling otherwise.
    #[default]
    Auto,
}

impl ContainmentTest {
    pub fn resolve(self, m_e: usize) -> ContainmentTest {
        match self {
            ContainmentTest::Auto if m_e <= AUTO_OPT_MAX_DIM => ContainmentTest::Optimization,
            ContainmentTest::Auto => ContainmentTest::Sampling,
            t => t,
        }
    }
}

/// Settings of the containment tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContainmentOptions {
    pub test: ContainmentTest,
    pub n_probe: usize,
    /// Confidence of the zero-failure bound attached to sampling verdicts.
    pub sigma: f64,
    pub seed: u64,
    pub nlp: NlpOptions,
}

impl Default for ContainmentOptions {
    fn default() -> Self {
        Self {
            test: ContainmentTest::Auto,
            n_probe: 2000,
            sigma: 0.95,
            seed: 0,
            // each start is a few milliseconds; failing regions of the
            // angular coordinate are easy to miss with fewer
            nlp: NlpOptions {
                n_starts: 32,
                ..Default::default()
            },
        }
    }
}

/// Result of the sampling test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplingOutcome {
    pub verdict: ContainmentVerdict,
    /// Index of the first failing probe.
    pub first_violation: Option<usize>,
    /// Upper confidence bound on the failing fraction of `E` when no probe
    /// fails.
    pub failure_bound: Option<f64>,
}

/// Sampling test against a fixed set of probe points.
pub fn containment_on_probes(spec: &ProblemSpec, theta: &[f64], a: &[f64], probes: &Matrix, sigma: f64) -> Result<SamplingOutcome> {
    if probes.rows() == 0 {
        return Err(Error::Input("the sampling test needs at least one probe".into()));
    }
    check_dim("probe columns", spec.m_e(), probes.cols())?;
    if let Some(e) = probes.iter_rows().next() {
        spec.check_point(theta, a, e)?;
    }
    let first = probes.iter_rows().position(|e| spec.r_max_unchecked(theta, a, e) > 0.0);
    Ok(match first {
        Some(j) => SamplingOutcome {
            verdict: ContainmentVerdict::Violated,
            first_violation: Some(j),
            failure_bound: None,
        },
        None => SamplingOutcome {
            verdict: ContainmentVerdict::ProbablyContained,
            first_violation: None,
            failure_bound: Some(1.0 - (1.0 - sigma).powf(1.0 / probes.rows() as f64)),
        },
    })
}

/// Draws `n_probe` uniform points of `set` and reports a violation if any of
/// them makes the design fail.
pub fn set_containment_sampling(
    spec: &ProblemSpec,
    theta: &[f64],
    a: &[f64],
    set: &EpistemicSet,
    n_probe: usize,
    opts: &ContainmentOptions,
) -> Result<SamplingOutcome> {
    if n_probe == 0 {
        return Err(Error::Input("the sampling test needs at least one probe".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let probes = set.sample_uniform(&mut rng, n_probe);
    containment_on_probes(spec, theta, a, &probes, opts.sigma)
}

/// Result of the optimization test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizationOutcome {
    pub verdict: ContainmentVerdict,
    /// Closest failing epistemic point found.
    pub e_star: Option<Vec<f64>>,
    /// `‖c − e*‖`, the radius of the largest set about `c` free of failures;
    /// infinite when no failing point exists in the searched region.
    pub radius: f64,
    /// Set when the search failed and the sampling test decided instead.
    pub fell_back: bool,
}

/// Closest failing point to the center: variables `e` plus, for max-norm
/// sets, an epigraph variable `t` bounding each weighted coordinate gap.
#[derive(Clone, Copy)]
struct ClosestFailure<'a> {
    spec: &'a ProblemSpec,
    theta: &'a [f64],
    a: &'a [f64],
    set: &'a EpistemicSet,
}

impl ClosestFailure<'_> {
    fn is_max_norm(&self) -> bool {
        matches!(self.set.norm, SetNorm::WeightedMax(_))
    }

    /// Coordinates with positive weight; the others are pinned to the center.
    fn scaled_gap(&self, e: &[f64], i: usize) -> f64 {
        (e[i] - self.set.center[i]) / self.set.norm.weights()[i]
    }
}

impl NlpModel for ClosestFailure<'_> {
    type Cache = ();

    fn dim(&self) -> usize {
        self.set.dim() + usize::from(self.is_max_norm())
    }

    fn n_ineq(&self) -> usize {
        1 + if self.is_max_norm() { 2 * self.set.dim() } else { 0 }
    }

    fn n_cached(&self) -> usize {
        0
    }

    fn prepare(&self, _x: &[f64]) {}

    fn evaluate(&self, _cache: &(), x: &[f64], ineq: &mut [f64]) -> f64 {
        let m = self.set.dim();
        let e = &x[..m];
        ineq[0] = DELTA_ACT - self.spec.r_max_unchecked(self.theta, self.a, e);
        let w = self.set.norm.weights();
        if self.is_max_norm() {
            let t = x[m];
            for i in 0..m {
                let g = if w[i] > 0.0 { self.scaled_gap(e, i) } else { 0.0 };
                ineq[1 + 2 * i] = g - t;
                ineq[2 + 2 * i] = -g - t;
            }
            t
        } else {
            (0..m)
                .filter(|&i| w[i] > 0.0)
                .map(|i| self.scaled_gap(e, i).powi(2))
                .sum()
        }
    }
}

/// Distance from the center of `set` to the closest epistemic point that
/// makes the design fail; the point is violated iff that distance is below
/// the radius of `set`.
pub fn set_containment_opt(
    spec: &ProblemSpec,
    theta: &[f64],
    a: &[f64],
    set: &EpistemicSet,
    opts: &ContainmentOptions,
) -> Result<OptimizationOutcome> {
    check_dim("epistemic set dimension", spec.m_e(), set.dim())?;
    let c = &set.center;
    if spec.r_max(theta, a, c)? >= 0.0 {
        return Ok(OptimizationOutcome {
            verdict: ContainmentVerdict::Violated,
            e_star: Some(c.clone()),
            radius: 0.0,
            fell_back: false,
        });
    }
    if set.radius == 0.0 {
        return Ok(OptimizationOutcome {
            verdict: ContainmentVerdict::Contained,
            e_star: None,
            radius: f64::INFINITY,
            fell_back: false,
        });
    }
    let model = ClosestFailure { spec, theta, a, set };
    let region = set.bounding_box(SEARCH_SCALE);
    let t_max = SEARCH_SCALE * set.radius;
    let bounds = if model.is_max_norm() {
        region.extend(&Bounds::new(vec![0.0], vec![t_max])?)
    } else {
        region.clone()
    };
    // Failing regions can be thin, so starts are the pool points closest
    // to failing rather than plain Latin-hypercube points.
    let n_starts = opts.nlp.n_starts.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.nlp.seed);
    let pool = latin_hypercube(&region, START_POOL * n_starts, &mut rng);
    let mut scored: Vec<(f64, Vec<f64>)> = pool.into_iter().map(|e| (spec.r_max_unchecked(theta, a, &e), e)).collect();
    scored.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut starts: Vec<Vec<f64>> = scored.into_iter().take(n_starts).map(|(_, e)| e).collect();
    starts.insert(0, c.clone());
    if model.is_max_norm() {
        for s in &mut starts {
            let t = set.distance(s).min(t_max);
            s.push(if t.is_finite() { t } else { t_max });
        }
    }
    let fall_back = |why: &str| -> Result<OptimizationOutcome> {
        log::warn!("containment search failed ({why}); using the sampling test");
        let s = set_containment_sampling(spec, theta, a, set, opts.n_probe, opts)?;
        Ok(OptimizationOutcome {
            verdict: s.verdict,
            e_star: None,
            radius: f64::NAN,
            fell_back: true,
        })
    };
    // Each start is solved on its own and its end point is moved onto the
    // failure boundary along the ray from the center, so a slightly
    // infeasible end point still yields an exact failing point.
    type Run = Result<Option<(f64, Vec<f64>)>>;
    let runs: Vec<Run> = starts
        .into_par_iter()
        .map(|x0| {
            let problem = NlpProblem {
                model: ClosestFailure { ..model },
                bounds: bounds.clone(),
                starts: vec![x0],
            };
            let res = minimize(&problem, &opts.nlp)?;
            if res.status == SolverStatus::Failed {
                return Ok(None);
            }
            Ok(first_failure_on_ray(spec, theta, a, set, &res.x[..set.dim()]))
        })
        .collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut errors = Vec::new();
    for r in runs {
        match r {
            Ok(Some((d, e))) if best.as_ref().is_none_or(|(bd, _)| d < *bd) => best = Some((d, e)),
            Ok(_) => {}
            Err(e) => errors.push(e.to_string()),
        }
    }
    if best.is_none() && !errors.is_empty() {
        return fall_back(&errors[0]);
    }
    Ok(match best {
        None => OptimizationOutcome {
            verdict: ContainmentVerdict::Contained,
            e_star: None,
            radius: f64::INFINITY,
            fell_back: false,
        },
        Some((radius, e_star)) => OptimizationOutcome {
            verdict: if radius < set.radius {
                ContainmentVerdict::Violated
            } else {
                ContainmentVerdict::Contained
            },
            e_star: Some(e_star),
            radius,
            fell_back: false,
        },
    })
}

/// First point along the ray from the center through `e` at which the
/// design fails by at least [`DELTA_ACT`], within the search region; returns
/// its distance to the center and the point.
fn first_failure_on_ray(spec: &ProblemSpec, theta: &[f64], a: &[f64], set: &EpistemicSet, e: &[f64]) -> Option<(f64, Vec<f64>)> {
    let c = &set.center;
    let unit = set.distance(e);
    if !(unit > 0.0 && unit.is_finite()) {
        return None;
    }
    let at = |s: f64| -> Vec<f64> { c.iter().zip(e).map(|(ci, ei)| ci + s * (ei - ci)).collect() };
    let fails = |s: f64| spec.r_max_unchecked(theta, a, &at(s)) >= DELTA_ACT;
    let s_max = SEARCH_SCALE * set.radius / unit;
    const STEPS: usize = 64;
    // the end point itself is the most likely crossing
    let mut grid: Vec<f64> = (1..=STEPS).map(|i| s_max * i as f64 / STEPS as f64).collect();
    if s_max > 1.0 {
        grid.push(1.0);
        grid.sort_by(f64::total_cmp);
    }
    let mut lo = 0.0;
    let mut hi = None;
    for s in grid {
        if fails(s) {
            hi = Some(s);
            break;
        }
        lo = s;
    }
    let mut hi = hi?;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if fails(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some((hi * unit, at(hi)))
}

// ---------------------------------------------------------------------------
// set-complexity

/// Counts behind the risk bound of a design.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskBoundReport {
    #[serde(rename = "n_s")]
    pub n_support: usize,
    #[serde(rename = "n_v")]
    pub n_violation: usize,
    #[serde(rename = "s_E")]
    pub set_complexity: usize,
    pub epsilon_bar: f64,
    pub beta: f64,
    pub containment_test: ContainmentTest,
    pub support: Vec<usize>,
    pub violations: Vec<usize>,
    /// False when the training data were not drawn IID, as after sequential
    /// augmentation; the bound then does not apply.
    pub bound_valid: bool,
}

/// Settings of a risk-bound analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskOptions {
    pub beta: f64,
    pub tol_support: f64,
    /// Latin-hypercube starts added to the warm start in each leave-one-out
    /// solve. A local solve from the full-data design is enough to detect
    /// whether the design moves; extra starts only add solver noise.
    pub loo_starts: usize,
    pub containment: ContainmentOptions,
}

impl Default for RiskOptions {
    fn default() -> Self {
        Self {
            beta: 1e-4,
            tol_support: TOL_SUPPORT,
            loo_starts: 0,
            containment: ContainmentOptions::default(),
        }
    }
}

/// Aleatory training scenarios that fail for some point of `set`.
pub fn set_violations(spec: &ProblemSpec, theta: &[f64], aleatory: &Matrix, set: &EpistemicSet, opts: &ContainmentOptions) -> Result<(ContainmentTest, Vec<usize>)> {
    let test = opts.test.resolve(spec.m_e());
    let violated: Vec<bool> = match test {
        ContainmentTest::Sampling => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let probes = set.sample_uniform(&mut rng, opts.n_probe.max(1));
            aleatory
                .iter_rows()
                .map(|a| Ok(containment_on_probes(spec, theta, a, &probes, opts.sigma)?.verdict.is_violated()))
                .collect::<Result<_>>()?
        }
        _ => (0..aleatory.rows())
            .into_par_iter()
            .map(|i| Ok(set_containment_opt(spec, theta, aleatory.row(i), set, opts)?.verdict.is_violated()))
            .collect::<Result<_>>()?,
    };
    Ok((test, violated.iter().enumerate().filter(|(_, v)| **v).map(|(i, _)| i).collect()))
}

fn assemble(n_a: usize, support: Vec<usize>, violations: Vec<usize>, test: ContainmentTest, beta: f64) -> Result<RiskBoundReport> {
    let mut union: Vec<usize> = support.iter().chain(&violations).copied().collect();
    union.sort_unstable();
    union.dedup();
    let s_e = union.len();
    Ok(RiskBoundReport {
        n_support: support.len(),
        n_violation: violations.len(),
        set_complexity: s_e,
        epsilon_bar: epsilon_bar(n_a, s_e, beta)?,
        beta,
        containment_test: test,
        support,
        violations,
        bound_valid: true,
    })
}

/// Set-complexity of `theta_star`, the design `solver` returns on `data`.
#[allow(clippy::too_many_arguments)]
pub fn set_complexity(
    spec: &ProblemSpec,
    solver: &DesignSolver<'_>,
    data: &ScenarioData,
    theta_star: &[f64],
    set: &EpistemicSet,
    opts: &RiskOptions,
) -> Result<RiskBoundReport> {
    data.validate(spec)?;
    let support = support_given(solver, data, theta_star, opts.tol_support)?;
    let (test, violations) = set_violations(spec, theta_star, &data.aleatory, set, &opts.containment)?;
    assemble(data.n_a(), support, violations, test, opts.beta)
}

/// Solves a program and bounds the set-risk of its design. Moment programs
/// depend on every scenario through the moment, so all scenarios count as
/// support and the bound is trivial.
pub fn risk_bound(
    formulation: &Formulation,
    spec: &ProblemSpec,
    data: &ScenarioData,
    cfg: &AlphaConfig,
    set: &EpistemicSet,
    solve_opts: &SolveOptions,
    opts: &RiskOptions,
) -> Result<RiskBoundReport> {
    let theta = solve(formulation, spec, data, cfg, solve_opts)?.theta_star;
    risk_bound_at(formulation, spec, data, cfg, &theta, set, solve_opts, opts)
}

/// Risk bound of a design already obtained from `formulation` on `data`.
#[allow(clippy::too_many_arguments)]
pub fn risk_bound_at(
    formulation: &Formulation,
    spec: &ProblemSpec,
    data: &ScenarioData,
    cfg: &AlphaConfig,
    theta: &[f64],
    set: &EpistemicSet,
    solve_opts: &SolveOptions,
    opts: &RiskOptions,
) -> Result<RiskBoundReport> {
    check_dim("design", spec.m_theta(), theta.len())?;
    if formulation.tag().is_moment() {
        let (test, violations) = set_violations(spec, theta, &data.aleatory, set, &opts.containment)?;
        return assemble(data.n_a(), (0..data.n_a()).collect(), violations, test, opts.beta);
    }
    let mut loo_opts = solve_opts.clone();
    loo_opts.nlp.n_starts = opts.loo_starts;
    let solver = program_solver(formulation, spec, cfg, &loo_opts, Some(theta.to_vec()), data.n_a());
    set_complexity(spec, &solver, data, theta, set, opts)
}
