//! Sequential design: cheap training sets drawn from large testing sets.
//!
//! Each iteration analyzes the current design on the testing scenarios,
//! stops once the robustness specification and the objective bound hold,
//! and otherwise picks a new small training set and re-solves. Training
//! aleatory scenarios mix a budget of failing points of high likelihood with
//! well-separated points; training epistemic scenarios are the ones that
//! hurt the current design most.
//!
//! Training sets built this way are not IID, so designs produced here never
//! carry a valid scenario bound.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::programs::{solve, solve_feasibility_seed, Formulation, FormulationTag, OutlierScope, SolveOptions};
use crate::rmc::{analyze, RmcConfig, RmcReport};
use crate::types::{AlphaConfig, Matrix, ProblemSpec, ScenarioData};

/// Ridge added to the selection covariance so small sets stay comparable.
pub const COV_RIDGE: f64 = 1e-6;

/// Upper bound on improving-swap passes of the selection search.
const MAX_SWAP_PASSES: usize = 100;

/// Robustness metric compared against the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpecMetric {
    /// Upper end of the failure probability range.
    RangeA,
    /// Upper end of the confidence-widened range.
    RangeB,
    /// Estimated probability of exceeding `p_max`.
    PointC,
    /// Upper end of the confidence interval of that probability.
    RangeD,
}

impl SpecMetric {
    fn value(self, report: &RmcReport, k: usize) -> f64 {
        let r = &report.requirements[k];
        match self {
            SpecMetric::RangeA => r.range_a.hi,
            SpecMetric::RangeB => r.range_b.hi,
            SpecMetric::PointC => r.point_c,
            SpecMetric::RangeD => r.range_d.hi,
        }
    }
}

pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Likelihood of aleatory scenarios used to rank them.
#[derive(Clone, Default)]
pub enum Density {
    #[default]
    Constant,
    Function(DensityFn),
}

impl Density {
    pub fn eval(&self, a: &[f64]) -> f64 {
        match self {
            Density::Constant => 1.0,
            Density::Function(f) => f(a),
        }
    }
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Constant => f.write_str("Constant"),
            Density::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// How many failing testing scenarios enter each training set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetRule {
    /// `⌈(n_a/n'_a) · #failing⌉` per requirement.
    #[default]
    Proportional,
    Fixed(Vec<usize>),
}

/// Settings of a sequential design run.
#[derive(Clone, Debug)]
pub struct SdConfig {
    pub max_iter: usize,
    pub metric: SpecMetric,
    /// Largest acceptable metric value, the same for every requirement.
    pub threshold: f64,
    pub j_bound: f64,
    /// Training size of the baseline design.
    pub n_a_initial: usize,
    pub n_a_growth: f64,
    pub n_a_cap: usize,
    /// Number of training epistemic scenarios.
    pub n_e: usize,
    /// Training epistemic scenarios used as given instead of being picked
    /// from the testing set.
    pub fixed_epistemic: Option<Matrix>,
    pub lambda_div: f64,
    pub density: Density,
    pub budget: BudgetRule,
    /// Program re-solved at each iteration; fractions are set by the loop.
    pub program: FormulationTag,
    /// Base fractions and penalties; `alpha_a` is overwritten by the loop.
    pub alphas: AlphaConfig,
    pub rmc: RmcConfig,
    pub solve: SolveOptions,
}

impl SdConfig {
    /// Defaults for a problem with `n_r` requirements.
    pub fn new(n_r: usize, metric: SpecMetric, threshold: f64) -> Self {
        Self {
            max_iter: 12,
            metric,
            threshold,
            j_bound: f64::INFINITY,
            n_a_initial: 50,
            n_a_growth: 1.3,
            n_a_cap: 100,
            n_e: 50,
            fixed_epistemic: None,
            lambda_div: 1.0,
            density: Density::Constant,
            budget: BudgetRule::Proportional,
            program: FormulationTag::RiskAgnosticLocal,
            alphas: AlphaConfig::zeros(n_r),
            rmc: RmcConfig::new(n_r, 0.95, threshold),
            solve: SolveOptions::default(),
        }
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Input("max_iter must be at least 1".into()));
        }
        if !(self.lambda_div >= 0.0) {
            return Err(Error::Input("lambda_div must be nonnegative".into()));
        }
        if self.n_a_initial < 2 || self.n_e == 0 || self.n_a_cap < self.n_a_initial {
            return Err(Error::Input(
                "training sizes need n_a_initial >= 2, n_e >= 1 and n_a_cap >= n_a_initial".into(),
            ));
        }
        if !(self.n_a_growth > 1.0) {
            return Err(Error::Input("n_a_growth must exceed 1".into()));
        }
        if self.program.is_moment() {
            return Err(Error::Input("sequential design does not support moment programs".into()));
        }
        if let Some(m) = &self.fixed_epistemic {
            check_dim("fixed epistemic columns", spec.m_e(), m.cols())?;
            if m.rows() == 0 {
                return Err(Error::Input("fixed epistemic set is empty".into()));
            }
        }
        if let BudgetRule::Fixed(b) = &self.budget {
            check_dim("budgets", spec.n_r(), b.len())?;
        }
        self.alphas.validate(spec.n_r())?;
        self.rmc.validate(spec)
    }
}

/// One pass of the loop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SdRecord {
    pub iteration: usize,
    /// Training size that produced the analyzed design.
    pub n_a: usize,
    pub alpha_a: Vec<f64>,
    pub objective: f64,
    pub metric: Vec<f64>,
    pub violated: Vec<usize>,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SdTrace {
    pub records: Vec<SdRecord>,
    /// Message of a solver failure that ended the run early.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SdOutcome {
    pub theta: Vec<f64>,
    pub trace: SdTrace,
    /// Specification met and objective within bound.
    pub converged: bool,
    pub training_aleatory: Vec<usize>,
    /// Indices into the testing epistemic set; empty when a fixed set is used.
    pub training_epistemic: Vec<usize>,
    /// Always false: the training data are not IID.
    pub bound_valid: bool,
}

/// Failing indicators `c_{i,k}`: scenario `i` of `aleatory` violates
/// requirement `k` for some row of `epistemic`. Laid out as `[k][i]`.
pub fn failing_indicators(spec: &ProblemSpec, theta: &[f64], aleatory: &Matrix, epistemic: &Matrix) -> Vec<Vec<bool>> {
    let n_r = spec.n_r();
    let per_point: Vec<Vec<bool>> = (0..aleatory.rows())
        .into_par_iter()
        .map(|i| {
            let a = aleatory.row(i);
            (0..n_r)
                .map(|k| epistemic.iter_rows().any(|e| spec.requirement(k, theta, a, e) > 0.0))
                .collect()
        })
        .collect();
    (0..n_r).map(|k| per_point.iter().map(|c| c[k]).collect()).collect()
}

/// Default budgets scaled from the testing failure counts.
pub fn proportional_budgets(failing: &[Vec<bool>], n_a: usize) -> Vec<usize> {
    failing
        .iter()
        .map(|c| {
            let n = c.len().max(1);
            let count = c.iter().filter(|x| **x).count();
            (n_a as f64 * count as f64 / n as f64 - 1e-9).ceil().max(0.0) as usize
        })
        .collect()
}

/// Whitened principal-component coordinates of a point cloud.
struct PcaFrame {
    mean: DVector<f64>,
    transform: DMatrix<f64>,
}

impl PcaFrame {
    fn fit(points: &Matrix) -> Self {
        let (n, m) = (points.rows(), points.cols());
        let mut mean = DVector::zeros(m);
        for p in points.iter_rows() {
            mean += DVector::from_column_slice(p);
        }
        mean /= n.max(1) as f64;
        let mut cov = DMatrix::zeros(m, m);
        for p in points.iter_rows() {
            let d = DVector::from_column_slice(p) - &mean;
            cov += &d * d.transpose();
        }
        cov /= (n.max(2) - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.max(1e-12).sqrt()));
        Self {
            mean,
            transform: scale * eig.eigenvectors.transpose(),
        }
    }

    fn project(&self, p: &[f64]) -> Vec<f64> {
        (&self.transform * (DVector::from_column_slice(p) - &self.mean))
            .iter()
            .copied()
            .collect()
    }
}

/// Selection problem on a fixed testing set.
struct Selection<'a> {
    z: Vec<Vec<f64>>,
    /// `γ_i f_a(a_i)`.
    gain: Vec<f64>,
    /// Failing pattern of each scenario, one bit per requirement.
    failing: Vec<Vec<bool>>,
    density: Vec<f64>,
    budgets: &'a [usize],
}

/// Running first and second moments of a point set.
#[derive(Clone)]
struct Moments {
    n: usize,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Moments {
    fn new(m: usize) -> Self {
        Self {
            n: 0,
            s1: vec![0.0; m],
            s2: vec![0.0; m * m],
        }
    }

    fn update(&mut self, z: &[f64], sign: f64) {
        let m = self.s1.len();
        for r in 0..m {
            self.s1[r] += sign * z[r];
            for c in 0..m {
                self.s2[r * m + c] += sign * z[r] * z[c];
            }
        }
        if sign > 0.0 {
            self.n += 1;
        } else {
            self.n -= 1;
        }
    }

    /// Log-determinant of the sample covariance plus the ridge.
    fn logdet(&self) -> f64 {
        let m = self.s1.len();
        let n = self.n as f64;
        let mut a = vec![0.0; m * m];
        for r in 0..m {
            for c in 0..m {
                let cov = if self.n >= 2 {
                    (self.s2[r * m + c] - self.s1[r] * self.s1[c] / n) / (n - 1.0)
                } else {
                    0.0
                };
                a[r * m + c] = cov + if r == c { COV_RIDGE } else { 0.0 };
            }
        }
        cholesky_logdet(&mut a, m)
    }

    /// Log-determinant after adding `add` and removing `remove`.
    fn logdet_with(&mut self, add: &[f64], remove: Option<&[f64]>) -> f64 {
        self.update(add, 1.0);
        if let Some(r) = remove {
            self.update(r, -1.0);
        }
        let v = self.logdet();
        if let Some(r) = remove {
            self.update(r, 1.0);
        }
        self.update(add, -1.0);
        v
    }
}

/// In-place Cholesky of a symmetric `m × m` matrix; `−∞` when it is not
/// positive definite.
fn cholesky_logdet(a: &mut [f64], m: usize) -> f64 {
    let mut logdet = 0.0;
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= a[j * m + k] * a[j * m + k];
        }
        if !(d > 0.0) {
            return f64::NEG_INFINITY;
        }
        let l = d.sqrt();
        a[j * m + j] = l;
        logdet += 2.0 * l.ln();
        for i in j + 1..m {
            let mut v = a[i * m + j];
            for k in 0..j {
                v -= a[i * m + k] * a[j * m + k];
            }
            a[i * m + j] = v / l;
        }
    }
    logdet
}

impl<'a> Selection<'a> {
    fn new(aleatory: &Matrix, failing: &[Vec<bool>], density: &Density, budgets: &'a [usize]) -> Self {
        let frame = PcaFrame::fit(aleatory);
        let density: Vec<f64> = aleatory.iter_rows().map(|a| density.eval(a)).collect();
        let rows: Vec<Vec<bool>> = (0..aleatory.rows()).map(|i| failing.iter().map(|c| c[i]).collect()).collect();
        let gain = rows
            .iter()
            .zip(&density)
            .map(|(r, f)| if r.iter().any(|c| *c) { *f } else { 0.0 })
            .collect();
        Self {
            z: aleatory.iter_rows().map(|a| frame.project(a)).collect(),
            gain,
            failing: rows,
            density,
            budgets,
        }
    }

    fn dim(&self) -> usize {
        self.z.first().map_or(0, Vec::len)
    }

    fn moments(&self, set: &[usize]) -> Moments {
        let mut mom = Moments::new(self.dim());
        for &i in set {
            mom.update(&self.z[i], 1.0);
        }
        mom
    }

    fn logdet(&self, set: &[usize]) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.moments(set).logdet()
    }

    fn value(&self, set: &[usize], obj: Objective) -> f64 {
        let lik: f64 = if obj.likelihood { set.iter().map(|&i| self.gain[i]).sum() } else { 0.0 };
        if obj.lambda > 0.0 {
            lik + obj.lambda * self.logdet(set)
        } else {
            lik
        }
    }

    fn is_failing(&self, i: usize) -> bool {
        self.failing[i].iter().any(|c| *c)
    }

    /// Greedy step: the candidate with the largest marginal value, ties
    /// broken by likelihood when it counts, then by index.
    fn best_addition(&self, mom: &mut Moments, obj: Objective, admissible: impl Fn(usize) -> bool) -> Option<usize> {
        let use_div = obj.lambda > 0.0 && self.dim() > 0;
        let base = if use_div { mom.logdet() } else { 0.0 };
        let mut best: Option<(f64, f64, usize)> = None;
        for i in (0..self.z.len()).filter(|&i| admissible(i)) {
            let mut v = if obj.likelihood { self.gain[i] } else { 0.0 };
            if use_div {
                v += obj.lambda * (mom.logdet_with(&self.z[i], None) - base);
            }
            let tie = if obj.likelihood { self.density[i] } else { 0.0 };
            let better = match best {
                None => true,
                Some((bv, bt, _)) => v.total_cmp(&bv).then(tie.total_cmp(&bt)).is_gt(),
            };
            if better {
                best = Some((v, tie, i));
            }
        }
        best.map(|(_, _, i)| i)
    }

    /// Greedy construction: failing scenarios until every budget is met or
    /// none is admissible, then non-failing ones up to `target`.
    fn greedy(&self, target: usize, obj: Objective) -> Result<Vec<usize>> {
        let n = self.z.len();
        let mut chosen = vec![false; n];
        let mut used = vec![0usize; self.budgets.len()];
        let mut set = Vec::new();
        let mut mom = Moments::new(self.dim());
        while used != self.budgets {
            let fits = |i: usize| {
                !chosen[i]
                    && self.is_failing(i)
                    && self.failing[i].iter().zip(&used).zip(self.budgets).all(|((c, u), b)| !c || u < b)
            };
            let Some(i) = self.best_addition(&mut mom, obj, fits) else { break };
            for (u, c) in used.iter_mut().zip(&self.failing[i]) {
                *u += usize::from(*c);
            }
            chosen[i] = true;
            mom.update(&self.z[i], 1.0);
            set.push(i);
        }
        if set.len() > target {
            return Err(Error::Input(format!(
                "violation budgets need {} scenarios but only {target} are selected",
                set.len()
            )));
        }
        while set.len() < target {
            let Some(i) = self.best_addition(&mut mom, obj, |i| !chosen[i] && !self.is_failing(i)) else {
                return Err(Error::Input(format!(
                    "only {} non-failing scenarios are available to complete a training set of {target}",
                    target - set.len()
                )));
            };
            chosen[i] = true;
            mom.update(&self.z[i], 1.0);
            set.push(i);
        }
        Ok(set)
    }

    /// Best-improvement swaps, slot by slot, between a selected scenario and
    /// an unselected one with the same failing pattern, so every budget count
    /// is kept.
    fn swap_search(&self, mut set: Vec<usize>, obj: Objective) -> Vec<usize> {
        let mut chosen = vec![false; self.z.len()];
        for &i in &set {
            chosen[i] = true;
        }
        let use_div = obj.lambda > 0.0 && self.dim() > 0;
        let gain = |i: usize| if obj.likelihood { self.gain[i] } else { 0.0 };
        let mut mom = self.moments(&set);
        let mut value = self.value(&set, obj);
        for _ in 0..MAX_SWAP_PASSES {
            let mut improved = false;
            for slot in 0..set.len() {
                let out = set[slot];
                let lik = value - if use_div { obj.lambda * mom.logdet() } else { 0.0 };
                let mut best = (value, None);
                for cand in 0..self.z.len() {
                    if chosen[cand] || self.failing[cand] != self.failing[out] {
                        continue;
                    }
                    let mut v = lik - gain(out) + gain(cand);
                    if use_div {
                        v += obj.lambda * mom.logdet_with(&self.z[cand], Some(&self.z[out]));
                    }
                    if v > best.0 + 1e-12 * best.0.abs().max(1.0) {
                        best = (v, Some(cand));
                    }
                }
                if let (v, Some(c)) = best {
                    chosen[out] = false;
                    chosen[c] = true;
                    mom.update(&self.z[out], -1.0);
                    mom.update(&self.z[c], 1.0);
                    set[slot] = c;
                    value = v;
                    improved = true;
                }
            }
            if !improved || !use_div {
                break;
            }
        }
        set
    }

    fn search(&self, target: usize, obj: Objective) -> Result<Vec<usize>> {
        Ok(self.swap_search(self.greedy(target, obj)?, obj))
    }
}

/// Terms of the selection objective that are switched on.
#[derive(Clone, Copy, Debug)]
struct Objective {
    likelihood: bool,
    lambda: f64,
}

/// Which part of the selection objective a search optimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    Combined,
    Likelihood,
    Diversity,
}

/// Picks `n_target` training scenarios from `aleatory`: failing scenarios up
/// to the budgets, completed by scenarios maximizing likelihood plus
/// `lambda_div` times the log-determinant of their covariance in whitened
/// principal axes. Budgets above the available failing count are lowered.
/// The result is sorted.
#[allow(clippy::too_many_arguments)]
pub fn select_training_aleatory(
    spec: &ProblemSpec,
    theta: &[f64],
    aleatory: &Matrix,
    epistemic: &Matrix,
    n_target: usize,
    budgets: &[usize],
    lambda_div: f64,
    density: &Density,
) -> Result<Vec<usize>> {
    let failing = failing_indicators(spec, theta, aleatory, epistemic);
    select_with_indicators(aleatory, &failing, n_target, budgets, lambda_div, density)
}

pub fn select_with_indicators(
    aleatory: &Matrix,
    failing: &[Vec<bool>],
    n_target: usize,
    budgets: &[usize],
    lambda_div: f64,
    density: &Density,
) -> Result<Vec<usize>> {
    select_by(aleatory, failing, n_target, budgets, lambda_div, density, Criterion::Combined)
}

/// Runs the search for one criterion. The combined search also polishes the
/// pure-likelihood and pure-diversity selections and keeps the best, so it
/// never scores below either of them.
pub fn select_by(
    aleatory: &Matrix,
    failing: &[Vec<bool>],
    n_target: usize,
    budgets: &[usize],
    lambda_div: f64,
    density: &Density,
    criterion: Criterion,
) -> Result<Vec<usize>> {
    let n = aleatory.rows();
    check_dim("budgets", failing.len(), budgets.len())?;
    if n_target > n {
        return Err(Error::Input(format!(
            "cannot select {n_target} training scenarios from {n} testing scenarios"
        )));
    }
    let budgets: Vec<usize> = budgets
        .iter()
        .zip(failing)
        .map(|(b, c)| (*b).min(c.iter().filter(|x| **x).count()))
        .collect();
    let sel = Selection::new(aleatory, failing, density, &budgets);
    let combined = Objective {
        likelihood: true,
        lambda: lambda_div,
    };
    let likelihood = Objective {
        likelihood: true,
        lambda: 0.0,
    };
    let diversity = Objective {
        likelihood: false,
        lambda: if lambda_div > 0.0 { lambda_div } else { 1.0 },
    };
    let mut set = match criterion {
        Criterion::Likelihood => sel.search(n_target, likelihood)?,
        Criterion::Diversity => sel.search(n_target, diversity)?,
        Criterion::Combined => {
            let mut best: Option<(f64, Vec<usize>)> = None;
            let candidates = [
                sel.search(n_target, combined)?,
                sel.swap_search(sel.search(n_target, likelihood)?, combined),
                sel.swap_search(sel.search(n_target, diversity)?, combined),
            ];
            for c in candidates {
                let v = sel.value(&c, combined);
                if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                    best = Some((v, c));
                }
            }
            best.map(|(_, s)| s).unwrap_or_default()
        }
    };
    set.sort_unstable();
    Ok(set)
}

/// Value of a selection under the training-set objective; exposed for
/// checking heuristics.
pub fn selection_value(
    aleatory: &Matrix,
    failing: &[Vec<bool>],
    set: &[usize],
    lambda_div: f64,
    density: &Density,
) -> f64 {
    let obj = Objective {
        likelihood: true,
        lambda: lambda_div,
    };
    Selection::new(aleatory, failing, density, &[]).value(set, obj)
}

/// The `n_target` rows of `epistemic` with the largest worst-case
/// requirement value over the selected aleatory scenarios, in decreasing
/// order of that value.
pub fn select_training_epistemic(
    spec: &ProblemSpec,
    theta: &[f64],
    aleatory: &Matrix,
    selected: &[usize],
    epistemic: &Matrix,
    n_target: usize,
) -> Result<Vec<usize>> {
    if n_target > epistemic.rows() {
        return Err(Error::Input(format!(
            "cannot select {n_target} epistemic scenarios from {}",
            epistemic.rows()
        )));
    }
    let score: Vec<f64> = (0..epistemic.rows())
        .into_par_iter()
        .map(|j| {
            let e = epistemic.row(j);
            selected
                .iter()
                .map(|&i| spec.r_max_unchecked(theta, aleatory.row(i), e))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let mut order: Vec<usize> = (0..epistemic.rows()).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    order.truncate(n_target);
    Ok(order)
}

/// Runs the loop from `baseline` against the testing sets.
pub fn run_sd(
    spec: &ProblemSpec,
    aleatory: &Matrix,
    epistemic: &Matrix,
    baseline: &[f64],
    cfg: &SdConfig,
) -> Result<SdOutcome> {
    cfg.validate(spec)?;
    check_dim("baseline design", spec.m_theta(), baseline.len())?;
    if !spec.bounds().contains(baseline) {
        return Err(Error::Input("baseline design lies outside the bounds".into()));
    }
    let testing = ScenarioData::new(aleatory.clone(), epistemic.clone())?.with_testing(aleatory.clone(), epistemic.clone())?;
    testing.validate(spec)?;
    let n_r = spec.n_r();
    let formulation = Formulation::new(cfg.program, None)?;

    let mut theta = baseline.to_vec();
    let mut alpha = cfg.alphas.alpha_a.clone();
    let mut n_a = cfg.n_a_initial;
    let mut trained_with = cfg.n_a_initial;
    let mut trace = SdTrace::default();
    let mut training = (Vec::new(), Vec::new());
    let mut converged = false;

    for iteration in 1..=cfg.max_iter {
        let report = analyze(spec, &theta, &testing, &cfg.rmc)?;
        let metric: Vec<f64> = (0..report.requirements.len()).map(|k| cfg.metric.value(&report, k)).collect();
        let violated: Vec<usize> = metric
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > cfg.threshold)
            .map(|(k, _)| k)
            .collect();
        let objective = spec.objective(&theta);
        log::info!(
            "iteration {iteration}: n_a {trained_with}, J {objective:.6}, metric {metric:?}, violated {violated:?}"
        );
        trace.records.push(SdRecord {
            iteration,
            n_a: trained_with,
            alpha_a: alpha.clone(),
            objective,
            metric,
            violated: violated.clone(),
            theta: theta.clone(),
        });
        if violated.is_empty() && objective <= cfg.j_bound {
            converged = true;
            break;
        }
        if iteration == cfg.max_iter {
            break;
        }
        if !violated.is_empty() {
            n_a = ((n_a as f64 * cfg.n_a_growth).ceil() as usize).min(cfg.n_a_cap);
            alpha = vec![0.0; n_r];
        } else {
            for a in &mut alpha {
                *a = (*a + 1.0 / n_a as f64).min(1.0 - 1.0 / n_a as f64);
            }
        }
        n_a = n_a.min(aleatory.rows());

        let failing = failing_indicators(spec, &theta, aleatory, epistemic);
        let budgets = match &cfg.budget {
            BudgetRule::Proportional => proportional_budgets(&failing, n_a),
            BudgetRule::Fixed(b) => b.clone(),
        };
        let a_idx = select_with_indicators(aleatory, &failing, n_a, &budgets, cfg.lambda_div, &cfg.density)?;
        let (e_idx, e_train) = match &cfg.fixed_epistemic {
            Some(m) => (Vec::new(), m.clone()),
            None => {
                let n_e = cfg.n_e.min(epistemic.rows());
                let idx = select_training_epistemic(spec, &theta, aleatory, &a_idx, epistemic, n_e)?;
                let m = epistemic.select_rows(&idx);
                (idx, m)
            }
        };
        let data = ScenarioData::new(aleatory.select_rows(&a_idx), e_train)?;
        let alphas = AlphaConfig {
            alpha_a: alpha.clone(),
            ..cfg.alphas.clone()
        };
        let opts = cfg.solve.clone().with_start(theta.clone());
        match resolve(&formulation, spec, &data, &alphas, &opts) {
            Ok(t) => {
                theta = t;
                trained_with = n_a;
                training = (a_idx, e_idx);
            }
            Err(e) => {
                log::warn!("iteration {iteration}: re-solve failed: {e}");
                trace.failure = Some(e.to_string());
                break;
            }
        }
    }
    Ok(SdOutcome {
        theta,
        trace,
        converged,
        training_aleatory: training.0,
        training_epistemic: training.1,
        bound_valid: false,
    })
}

/// Solves the configured program, falling back to the feasibility seed when
/// it fails or ends infeasible.
fn resolve(
    formulation: &Formulation,
    spec: &ProblemSpec,
    data: &ScenarioData,
    alphas: &AlphaConfig,
    opts: &SolveOptions,
) -> Result<Vec<f64>> {
    use crate::nlp::SolverStatus;
    match solve(formulation, spec, data, alphas, opts) {
        Ok(r) if r.status != SolverStatus::Infeasible && r.status != SolverStatus::Failed => Ok(r.theta_star),
        first => {
            let reason = match &first {
                Ok(r) => format!("{:?}", r.status),
                Err(e) => e.to_string(),
            };
            log::warn!("{} ended with {reason}; using the feasibility seed", formulation.tag());
            let seed = solve_feasibility_seed(spec, data, alphas, &vec![1.0; spec.n_r()], OutlierScope::Local, opts)?;
            Ok(seed.theta_star)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{circle_problem, GaussianMixture};
    use crate::types::Bounds;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn points(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        (0u32..(1 << n))
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
            .collect()
    }

    /// Exhaustive optimum over subsets meeting the (lowered) budgets exactly.
    fn brute_force(a: &Matrix, failing: &[Vec<bool>], k: usize, budgets: &[usize], lambda: f64, density: &Density) -> f64 {
        let budgets: Vec<usize> = budgets
            .iter()
            .zip(failing)
            .map(|(b, c)| (*b).min(c.iter().filter(|x| **x).count()))
            .collect();
        subsets(a.rows(), k)
            .into_iter()
            .filter(|s| {
                failing
                    .iter()
                    .zip(&budgets)
                    .all(|(c, b)| s.iter().filter(|&&i| c[i]).count() == *b)
            })
            .map(|s| selection_value(a, failing, &s, lambda, density))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn random_instance(seed: u64, n: usize) -> (Matrix, Vec<Vec<bool>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = GaussianMixture::default().sample(&mut rng, n);
        let failing = vec![a.iter_rows().map(|p| p[0] * p[0] + p[1] * p[1] > 2.0).collect()];
        (a, failing)
    }

    #[test]
    fn likelihood_selection_matches_exhaustive_search() {
        for seed in 0..6 {
            let (a, failing) = random_instance(seed, 13);
            let density = Density::Function(Arc::new(|p: &[f64]| GaussianMixture::default().pdf(p)));
            let n_fail = failing[0].iter().filter(|x| **x).count();
            for k in [4, 7] {
                let budget = [n_fail.min(2)];
                if k - budget[0] > a.rows() - n_fail {
                    continue;
                }
                let s = select_with_indicators(&a, &failing, k, &budget, 0.0, &density).unwrap();
                let v = selection_value(&a, &failing, &s, 0.0, &density);
                let opt = brute_force(&a, &failing, k, &budget, 0.0, &density);
                assert!((v - opt).abs() < 1e-12, "seed {seed}, k {k}: {v} vs {opt}");
                assert_eq!(s.iter().filter(|&&i| failing[0][i]).count(), budget[0]);
            }
        }
    }

    #[test]
    fn constant_density_takes_budgeted_failures_and_fills() {
        let (a, failing) = random_instance(9, 15);
        let n_fail = failing[0].iter().filter(|x| **x).count();
        assert!(n_fail >= 2);
        let s = select_with_indicators(&a, &failing, 6, &[2], 0.0, &Density::Constant).unwrap();
        assert_eq!(s.len(), 6);
        assert_eq!(s.iter().filter(|&&i| failing[0][i]).count(), 2);
        let opt = brute_force(&a, &failing, 6, &[2], 0.0, &Density::Constant);
        assert_eq!(selection_value(&a, &failing, &s, 0.0, &Density::Constant), opt);
    }

    #[test]
    fn diversity_selection_is_close_to_exhaustive_optimum() {
        for seed in 0..4 {
            let (a, failing) = random_instance(100 + seed, 12);
            let lambda = 0.5;
            let density = Density::Constant;
            let s = select_with_indicators(&a, &failing, 5, &[1], lambda, &density).unwrap();
            let v = selection_value(&a, &failing, &s, lambda, &density);
            let opt = brute_force(&a, &failing, 5, &[1], lambda, &density);
            assert!(v <= opt + 1e-12);
            assert!(v >= opt - 0.1 * opt.abs().max(1.0), "seed {seed}: {v} vs {opt}");
        }
    }

    #[test]
    fn no_failures_means_no_budget() {
        let a = points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]]);
        let failing = vec![vec![false; 5]];
        let s = select_with_indicators(&a, &failing, 4, &[3], 1.0, &Density::Constant).unwrap();
        assert_eq!(s.len(), 4);
        // the spread-out corners beat the center
        assert_eq!(s, vec![0, 1, 2, 3]);
    }

    #[test]
    fn impossible_selections_are_rejected() {
        let a = points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let failing = vec![vec![true, false, false]];
        assert!(select_with_indicators(&a, &failing, 4, &[0], 0.0, &Density::Constant).is_err());
        // two non-failing scenarios cannot complete three slots with no failures allowed
        assert!(select_with_indicators(&a, &failing, 3, &[0], 0.0, &Density::Constant).is_err());
        let failing = vec![vec![true, true, true]];
        assert!(select_with_indicators(&a, &failing, 1, &[3], 0.0, &Density::Constant).is_err());
    }

    #[test]
    fn budgets_above_failure_count_are_lowered() {
        let a = points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [3.0, 3.0]]);
        let failing = vec![vec![false, false, false, true]];
        let s = select_with_indicators(&a, &failing, 3, &[5], 0.0, &Density::Constant).unwrap();
        assert!(s.contains(&3));
    }

    #[test]
    fn proportional_budget_rounds_up() {
        let failing = vec![vec![true, false, false, false, true, false, false, false, false, false]];
        assert_eq!(proportional_budgets(&failing, 3), vec![1]);
        assert_eq!(proportional_budgets(&failing, 10), vec![2]);
        assert_eq!(proportional_budgets(&[vec![false; 4]], 3), vec![0]);
    }

    #[test]
    fn epistemic_selection_ranks_by_worst_case() {
        let spec = circle_problem();
        let theta = [0.0, 0.0, 2.0];
        let a = points(&[[1.5, 0.0], [0.0, -1.0]]);
        // larger e1 shifts and inflates the circle more
        let e = Matrix::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![0.2, std::f64::consts::PI, 0.0],
            vec![0.1, std::f64::consts::PI, 0.0],
            vec![0.05, std::f64::consts::PI, 0.0],
        ])
        .unwrap();
        let order = select_training_epistemic(&spec, &theta, &a, &[0, 1], &e, 4).unwrap();
        let worst = |j: usize| {
            (0..2)
                .map(|i| spec.r_max_unchecked(&theta, a.row(i), e.row(j)))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        for w in order.windows(2) {
            assert!(worst(w[0]) >= worst(w[1]));
        }
        assert_eq!(order[0], 1);
        assert_eq!(select_training_epistemic(&spec, &theta, &a, &[0, 1], &e, 1).unwrap(), vec![1]);
    }

    #[test]
    fn satisfied_baseline_stops_immediately() {
        let spec = circle_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = GaussianMixture::default().sample(&mut rng, 200);
        let e = crate::benchmark::epistemic_set().sample_uniform(&mut rng, 20);
        let cfg = SdConfig::new(1, SpecMetric::RangeA, 1e-3);
        let out = run_sd(&spec, &a, &e, &[0.5, 0.3, 9.0], &cfg).unwrap();
        assert!(out.converged);
        assert_eq!(out.trace.records.len(), 1);
        assert_eq!(out.theta, vec![0.5, 0.3, 9.0]);
        assert!(!out.bound_valid);
    }

    #[test]
    fn iteration_limit_bounds_the_trace() {
        let spec = circle_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = GaussianMixture::default().sample(&mut rng, 300);
        let e = crate::benchmark::epistemic_set().sample_uniform(&mut rng, 10);
        let mut cfg = SdConfig::new(1, SpecMetric::RangeA, 1e-3);
        cfg.max_iter = 1;
        let out = run_sd(&spec, &a, &e, &[0.0, 0.0, 0.5], &cfg).unwrap();
        assert!(!out.converged);
        assert_eq!(out.trace.records.len(), 1);
        assert_eq!(out.trace.records[0].violated, vec![0]);
    }

    #[test]
    fn config_checks() {
        let spec = circle_problem();
        let mut cfg = SdConfig::new(1, SpecMetric::RangeA, 1e-3);
        assert!(cfg.validate(&spec).is_ok());
        cfg.max_iter = 0;
        assert!(cfg.validate(&spec).is_err());
        let mut cfg = SdConfig::new(1, SpecMetric::RangeA, 1e-3);
        cfg.lambda_div = -1.0;
        assert!(cfg.validate(&spec).is_err());
        let bounds = Bounds::new(vec![0.0; 3], vec![1.0; 3]).unwrap();
        let small = crate::benchmark::circle_problem_with_bounds(bounds).unwrap();
        let a = points(&[[0.0, 0.0], [1.0, 1.0]]);
        let e = Matrix::from_rows(&[vec![0.0; 3]]).unwrap();
        let cfg = SdConfig::new(1, SpecMetric::RangeA, 1e-3);
        assert!(run_sd(&small, &a, &e, &[2.0, 0.0, 0.5], &cfg).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// The selection scores at least as well as the pure-likelihood and
        /// pure-diversity selections and respects budgets and size.
        #[test]
        fn selection_dominates_single_criteria(seed in 0u64..1000, lambda in 0.01f64..2.0, k in 4usize..20) {
            let (a, failing) = random_instance(seed, 60);
            let n_fail = failing[0].iter().filter(|x| **x).count();
            let budget = [n_fail.min(3)];
            let density = Density::Function(Arc::new(|p: &[f64]| GaussianMixture::default().pdf(p)));
            let s = select_with_indicators(&a, &failing, k, &budget, lambda, &density).unwrap();
            prop_assert_eq!(s.len(), k);
            prop_assert_eq!(s.iter().filter(|&&i| failing[0][i]).count(), budget[0]);
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
            let v = selection_value(&a, &failing, &s, lambda, &density);
            for criterion in [Criterion::Likelihood, Criterion::Diversity] {
                let other = select_by(&a, &failing, k, &budget, lambda, &density, criterion).unwrap();
                prop_assert!(v >= selection_value(&a, &failing, &other, lambda, &density) - 1e-9);
            }
        }
    }
}
