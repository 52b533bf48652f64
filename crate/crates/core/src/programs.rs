//! Scenario programs that turn a design problem and scenario data into
//! nonlinear programs, and the extraction of outliers from their solutions.
//!
//! Seven formulations are provided:
//!
//! | formulation            | decision    | outliers removed by                      |
//! |------------------------|-------------|------------------------------------------|
//! | risk-averse global     | `(θ, ξ)`    | slack penalty and epistemic weights      |
//! | risk-averse local      | `(θ, ξ)`    | slack penalty and per-scenario quantiles |
//! | risk-agnostic global   | `θ`         | quantile of weighted worst cases         |
//! | risk-agnostic local    | `θ`         | quantile of per-scenario quantiles       |
//! | feasibility seed       | `(θ, α_a)`  | minimizes the outlier fractions          |
//! | moment risk-averse     | `(θ, λ, ξ)` | slack-weighted response mean             |
//! | moment risk-agnostic   | `(θ, λ)`    | quantile over prefix means of responses  |
//!
//! Every quantile is the piecewise-linear one of [`crate::ecdf`].

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ecdf::{cdf_sorted, dominated_count, grid_slot, quantile_sorted, quantile_with, sort_and_separate};
use crate::error::{check_dim, Error, Result};
use crate::nlp::{latin_hypercube, minimize, NlpModel, NlpOptions, NlpProblem, NlpResult, SolverStatus};
use crate::types::{AlphaConfig, Bounds, ProblemSpec, Requirement, RequirementValues, ScenarioData, SolveResult};
use crate::weights::{relaxed_fraction, smooth_relaxed_fraction, weights_with, FailureProbabilities};

/// A scenario counts as an aleatory outlier when one of its quantile
/// constraints exceeds this value; it absorbs the solver's feasibility slack.
pub const OUTLIER_TOL: f64 = 1e-5;

/// Weight below which an epistemic scenario counts as discarded.
pub const WEIGHT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulationTag {
    RiskAverseGlobal,
    RiskAverseLocal,
    RiskAgnosticGlobal,
    RiskAgnosticLocal,
    FeasibilitySeed,
    MomentRiskAverse,
    MomentRiskAgnostic,
}

impl FormulationTag {
    pub fn is_moment(self) -> bool {
        matches!(self, Self::MomentRiskAverse | Self::MomentRiskAgnostic)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::RiskAverseGlobal => "risk-averse-global",
            Self::RiskAverseLocal => "risk-averse-local",
            Self::RiskAgnosticGlobal => "risk-agnostic-global",
            Self::RiskAgnosticLocal => "risk-agnostic-local",
            Self::FeasibilitySeed => "feasibility-seed",
            Self::MomentRiskAverse => "moment-risk-averse",
            Self::MomentRiskAgnostic => "moment-risk-agnostic",
        }
    }
}

impl fmt::Display for FormulationTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether epistemic outliers are shared by all aleatory scenarios (global)
/// or chosen per aleatory scenario (local).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutlierScope {
    Global,
    Local,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentKind {
    #[default]
    Mean,
}

/// Response function and settings of the moment programs.
#[derive(Clone)]
pub struct MomentSpec {
    pub response: Requirement,
    pub kind: MomentKind,
    /// Fraction of epistemic scenarios ignored in the response quantiles.
    pub alpha_e: f64,
}

impl fmt::Debug for MomentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MomentSpec")
            .field("kind", &self.kind)
            .field("alpha_e", &self.alpha_e)
            .finish()
    }
}

/// A program tag with the response it needs, if any.
#[derive(Clone, Debug)]
pub struct Formulation {
    tag: FormulationTag,
    moment: Option<MomentSpec>,
}

impl Formulation {
    pub fn new(tag: FormulationTag, moment: Option<MomentSpec>) -> Result<Self> {
        if tag.is_moment() != moment.is_some() {
            return Err(Error::Input(format!(
                "{tag} {} a response function",
                if tag.is_moment() { "requires" } else { "does not take" }
            )));
        }
        Ok(Self { tag, moment })
    }

    pub fn tag(&self) -> FormulationTag {
        self.tag
    }

    pub fn moment(&self) -> Option<&MomentSpec> {
        self.moment.as_ref()
    }
}

/// The requirement values of one aleatory scenario over the epistemic set.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoDistribution {
    pub values: Vec<f64>,
    pub aleatory_index: usize,
    pub requirement: usize,
}

pub fn pseudo_distribution(
    spec: &ProblemSpec,
    theta: &[f64],
    data: &ScenarioData,
    k: usize,
    i: usize,
) -> PseudoDistribution {
    let a = data.aleatory.row(i);
    PseudoDistribution {
        values: data
            .epistemic
            .iter_rows()
            .map(|e| spec.requirement(k, theta, a, e))
            .collect(),
        aleatory_index: i,
        requirement: k,
    }
}

/// Solver settings plus optional warm-start designs tried before the
/// Latin-hypercube starts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub nlp: NlpOptions,
    pub theta_starts: Vec<Vec<f64>>,
}

impl SolveOptions {
    pub fn with_start(mut self, theta: Vec<f64>) -> Self {
        self.theta_starts.push(theta);
        self
    }
}

/// Aleatory and per-scenario epistemic outliers of a design.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Outliers {
    pub aleatory: Vec<usize>,
    pub epistemic: Vec<Vec<usize>>,
}

/// Per-scenario quantiles `q_{k,i}` laid out as `[k · n_a + i]`.
fn scenario_quantiles(values: &RequirementValues, alpha_e: &[f64], scratch: &mut Vec<f64>) -> Vec<f64> {
    let mut q = Vec::with_capacity(values.n_r() * values.n_a());
    for (k, a) in alpha_e.iter().enumerate() {
        for i in 0..values.n_a() {
            q.push(quantile_with(values.row(k, i), 1.0 - a, scratch));
        }
    }
    q
}

/// Outliers from precomputed requirement values.
pub fn outliers_from_values(values: &RequirementValues, alpha_e: &[f64]) -> Outliers {
    let q = scenario_quantiles(values, alpha_e, &mut Vec::new());
    let (n_r, n_a, n_e) = (values.n_r(), values.n_a(), values.n_e());
    let aleatory = (0..n_a)
        .filter(|&i| (0..n_r).any(|k| q[k * n_a + i] > OUTLIER_TOL))
        .collect();
    let epistemic = (0..n_a)
        .map(|i| {
            (0..n_e)
                .filter(|&j| (0..n_r).any(|k| values.get(k, i, j) > q[k * n_a + i]))
                .collect()
        })
        .collect();
    Outliers { aleatory, epistemic }
}

/// Aleatory outliers (some quantile constraint is positive) and, for every
/// aleatory scenario, the epistemic scenarios above its quantile.
pub fn extract_outliers(spec: &ProblemSpec, data: &ScenarioData, cfg: &AlphaConfig, theta: &[f64]) -> Result<Outliers> {
    cfg.validate(spec.n_r())?;
    data.validate(spec)?;
    check_dim("design vector", spec.m_theta(), theta.len())?;
    let values = RequirementValues::compute(spec, theta, &data.aleatory, &data.epistemic);
    Ok(outliers_from_values(&values, &cfg.alpha_e))
}

/// Epistemic scenarios whose weight vanishes for some requirement.
fn global_outliers(values: &RequirementValues, alpha_a: &[f64], cfg: &AlphaConfig) -> Vec<usize> {
    let mut scratch = Vec::new();
    let mut out = vec![false; values.n_e()];
    for k in 0..values.n_r() {
        let fp = FailureProbabilities::new(values, k);
        let (w, _) = weights_with(values, k, &fp, alpha_a[k], cfg.alpha_e[k], cfg.gamma, &mut scratch);
        for (o, wj) in out.iter_mut().zip(&w) {
            *o |= *wj <= WEIGHT_TOL;
        }
    }
    (0..values.n_e()).filter(|&j| out[j]).collect()
}

/// Shared view of one program instance.
struct Ctx<'a> {
    spec: &'a ProblemSpec,
    data: &'a ScenarioData,
    cfg: &'a AlphaConfig,
    m: usize,
    n_a: usize,
    n_r: usize,
}

impl<'a> Ctx<'a> {
    fn new(spec: &'a ProblemSpec, data: &'a ScenarioData, cfg: &'a AlphaConfig) -> Result<Self> {
        data.validate(spec)?;
        cfg.validate(spec.n_r())?;
        Ok(Self {
            spec,
            data,
            cfg,
            m: spec.m_theta(),
            n_a: data.n_a(),
            n_r: spec.n_r(),
        })
    }

    fn values(&self, theta: &[f64]) -> RequirementValues {
        RequirementValues::compute(self.spec, theta, &self.data.aleatory, &self.data.epistemic)
    }

    /// Response quantiles `H_i` at level `1 − α_e`.
    fn response_quantiles(&self, moment: &MomentSpec, theta: &[f64], scratch: &mut Vec<f64>) -> Vec<f64> {
        let h = &moment.response;
        let mut row = Vec::with_capacity(self.data.n_e());
        self.data
            .aleatory
            .iter_rows()
            .map(|a| {
                row.clear();
                row.extend(self.data.epistemic.iter_rows().map(|e| h(theta, a, e)));
                quantile_with(&row, 1.0 - moment.alpha_e, scratch)
            })
            .collect()
    }

    fn theta(&self, x: &[f64]) -> Vec<f64> {
        x[..self.m].to_vec()
    }
}

/// Design start points: warm starts first, then a Latin-hypercube design.
fn theta_starts(spec: &ProblemSpec, opts: &SolveOptions) -> Result<Vec<Vec<f64>>> {
    let mut starts = Vec::new();
    for t in &opts.theta_starts {
        check_dim("warm start", spec.m_theta(), t.len())?;
        let mut t = t.clone();
        spec.bounds().project(&mut t);
        starts.push(t);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.nlp.seed);
    starts.extend(latin_hypercube(spec.bounds(), opts.nlp.n_starts, &mut rng));
    if starts.is_empty() {
        return Err(Error::Input("at least one start point is required".into()));
    }
    Ok(starts)
}

fn slack_bounds(theta: &Bounds, n: usize) -> Bounds {
    theta.extend(&Bounds {
        lower: vec![0.0; n],
        upper: vec![f64::INFINITY; n],
    })
}

/// Quantile of `z` at `level` and the indices of the order statistics below
/// it. A quantile constraint is written as the quantile followed by these
/// values: the feasible set is unchanged, but the penalty sees every
/// scenario that is active at once instead of a single kinked maximum.
fn quantile_and_dominated(z: &[f64], level: f64, scratch: &mut Vec<f64>) -> (f64, Vec<usize>) {
    let q = quantile_with(z, level, scratch);
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
    order.truncate(dominated_count(z.len(), level));
    (q, order)
}

/// Writes the expanded form of `quantile(z, level) ≤ 0` into `out`
/// (length `z.len()`), padding with zeros.
fn quantile_block(z: &[f64], level: f64, scratch: &mut Vec<f64>, out: &mut [f64]) {
    let (q, below) = quantile_and_dominated(z, level, scratch);
    out.fill(0.0);
    out[0] = q;
    for (o, &i) in out[1..].iter_mut().zip(&below) {
        *o = z[i];
    }
}

// ---------------------------------------------------------------------------
// risk-averse local

struct AverseLocal<'a> {
    ctx: Ctx<'a>,
}

struct QuantileCache {
    j: f64,
    q: Vec<f64>,
}

impl NlpModel for AverseLocal<'_> {
    type Cache = QuantileCache;

    fn dim(&self) -> usize {
        self.ctx.m + self.ctx.n_a
    }

    fn n_ineq(&self) -> usize {
        self.ctx.n_r * self.ctx.n_a
    }

    fn n_cached(&self) -> usize {
        self.ctx.m
    }

    fn prepare(&self, x: &[f64]) -> QuantileCache {
        let theta = &x[..self.ctx.m];
        let values = self.ctx.values(theta);
        QuantileCache {
            j: self.ctx.spec.objective(theta),
            q: scenario_quantiles(&values, &self.ctx.cfg.alpha_e, &mut Vec::new()),
        }
    }

    fn evaluate(&self, c: &QuantileCache, x: &[f64], ineq: &mut [f64]) -> f64 {
        let xi = &x[self.ctx.m..];
        let n_a = self.ctx.n_a;
        for (idx, g) in ineq.iter_mut().enumerate() {
            *g = c.q[idx] - xi[idx % n_a];
        }
        c.j + self.ctx.cfg.rho * xi.iter().sum::<f64>()
    }
}

/// Initial slacks that make every quantile constraint hold.
fn slack_start(q: &[f64], n_a: usize) -> Vec<f64> {
    let mut xi = vec![0.0f64; n_a];
    for (idx, v) in q.iter().enumerate() {
        let i = idx % n_a;
        xi[i] = xi[i].max(*v);
    }
    xi
}

// ---------------------------------------------------------------------------
// risk-averse global

struct AverseGlobal<'a> {
    ctx: Ctx<'a>,
}

struct ValuesCache {
    j: f64,
    values: RequirementValues,
    fp: Vec<FailureProbabilities>,
}

impl AverseGlobal<'_> {
    fn values_cache(ctx: &Ctx, theta: &[f64]) -> ValuesCache {
        let values = ctx.values(theta);
        let fp = (0..ctx.n_r).map(|k| FailureProbabilities::new(&values, k)).collect();
        ValuesCache {
            j: ctx.spec.objective(theta),
            values,
            fp,
        }
    }

    /// Largest weighted requirement value of each aleatory scenario.
    fn weighted_max(&self, c: &ValuesCache, alpha_a: f64) -> Vec<f64> {
        let ctx = &self.ctx;
        let n_a = ctx.n_a;
        let mut out = vec![f64::NEG_INFINITY; n_a];
        let mut scratch = Vec::new();
        for k in 0..ctx.n_r {
            let (w, _) = weights_with(&c.values, k, &c.fp[k], alpha_a, ctx.cfg.alpha_e[k], ctx.cfg.gamma, &mut scratch);
            for (i, o) in out.iter_mut().enumerate() {
                for (j, wj) in w.iter().enumerate() {
                    *o = o.max(wj * c.values.get(k, i, j));
                }
            }
        }
        out
    }
}

impl NlpModel for AverseGlobal<'_> {
    type Cache = ValuesCache;

    fn dim(&self) -> usize {
        self.ctx.m + self.ctx.n_a
    }

    fn n_ineq(&self) -> usize {
        self.ctx.n_r * self.ctx.n_a * self.ctx.data.n_e()
    }

    fn n_cached(&self) -> usize {
        self.ctx.m
    }

    fn prepare(&self, x: &[f64]) -> ValuesCache {
        Self::values_cache(&self.ctx, &x[..self.ctx.m])
    }

    fn evaluate(&self, c: &ValuesCache, x: &[f64], ineq: &mut [f64]) -> f64 {
        let ctx = &self.ctx;
        let xi = &x[ctx.m..];
        let frac = smooth_relaxed_fraction(xi);
        let n_e = ctx.data.n_e();
        let mut scratch = Vec::new();
        let mut idx = 0;
        for k in 0..ctx.n_r {
            let (w, _) = weights_with(&c.values, k, &c.fp[k], frac, ctx.cfg.alpha_e[k], ctx.cfg.gamma, &mut scratch);
            for (i, xi_i) in xi.iter().enumerate() {
                for j in 0..n_e {
                    let wj = w.get(j).copied().unwrap_or(1.0);
                    ineq[idx] = wj * c.values.get(k, i, j) - xi_i;
                    idx += 1;
                }
            }
        }
        c.j + ctx.cfg.rho * xi.iter().sum::<f64>()
    }
}

// ---------------------------------------------------------------------------
// risk-agnostic global and local

struct Agnostic<'a> {
    ctx: Ctx<'a>,
    scope: OutlierScope,
}

struct ConstraintCache {
    j: f64,
    g: Vec<f64>,
}

impl Agnostic<'_> {
    /// `Z_{k,i}` (global) or `N_{k,i}` (local), laid out as `[k · n_a + i]`.
    fn scenario_values(&self, theta: &[f64], alpha_a: &[f64]) -> Vec<f64> {
        let ctx = &self.ctx;
        let values = ctx.values(theta);
        match self.scope {
            OutlierScope::Local => scenario_quantiles(&values, &ctx.cfg.alpha_e, &mut Vec::new()),
            OutlierScope::Global => {
                let mut scratch = Vec::new();
                let mut z = Vec::with_capacity(ctx.n_r * ctx.n_a);
                for k in 0..ctx.n_r {
                    let fp = FailureProbabilities::new(&values, k);
                    let (w, _) = weights_with(&values, k, &fp, alpha_a[k], ctx.cfg.alpha_e[k], ctx.cfg.gamma, &mut scratch);
                    for i in 0..ctx.n_a {
                        let zi = w
                            .iter()
                            .enumerate()
                            .map(|(j, wj)| wj * values.get(k, i, j))
                            .fold(f64::NEG_INFINITY, f64::max);
                        z.push(zi);
                    }
                }
                z
            }
        }
    }
}

impl NlpModel for Agnostic<'_> {
    type Cache = ConstraintCache;

    fn dim(&self) -> usize {
        self.ctx.m
    }

    fn n_ineq(&self) -> usize {
        self.ctx.n_r * self.ctx.n_a
    }

    fn prepare(&self, x: &[f64]) -> ConstraintCache {
        let ctx = &self.ctx;
        let z = self.scenario_values(x, &ctx.cfg.alpha_a);
        let mut scratch = Vec::new();
        let mut g = vec![0.0; z.len()];
        for ((zk, gk), a) in z.chunks(ctx.n_a).zip(g.chunks_mut(ctx.n_a)).zip(&ctx.cfg.alpha_a) {
            quantile_block(zk, 1.0 - a, &mut scratch, gk);
        }
        ConstraintCache {
            j: ctx.spec.objective(x),
            g,
        }
    }

    fn evaluate(&self, c: &ConstraintCache, _x: &[f64], ineq: &mut [f64]) -> f64 {
        ineq.copy_from_slice(&c.g);
        c.j
    }
}

// ---------------------------------------------------------------------------
// feasibility seed

struct Seed<'a> {
    inner: Agnostic<'a>,
    omega: Vec<f64>,
}

enum SeedCache {
    Local(Vec<Vec<f64>>),
    Global(ValuesCache),
}

impl Seed<'_> {
    /// Sorted per-requirement scenario values for the local variant.
    fn sorted_local(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        let n_a = self.inner.ctx.n_a;
        let z = self.inner.scenario_values(theta, &self.inner.ctx.cfg.alpha_a);
        z.chunks(n_a)
            .map(|c| {
                let mut c = c.to_vec();
                sort_and_separate(&mut c);
                c
            })
            .collect()
    }
}

impl NlpModel for Seed<'_> {
    type Cache = SeedCache;

    fn dim(&self) -> usize {
        self.inner.ctx.m + self.inner.ctx.n_r
    }

    fn n_ineq(&self) -> usize {
        self.inner.ctx.n_r * self.inner.ctx.n_a
    }

    fn n_cached(&self) -> usize {
        self.inner.ctx.m
    }

    fn prepare(&self, x: &[f64]) -> SeedCache {
        let theta = &x[..self.inner.ctx.m];
        match self.inner.scope {
            OutlierScope::Local => SeedCache::Local(self.sorted_local(theta)),
            OutlierScope::Global => SeedCache::Global(AverseGlobal::values_cache(&self.inner.ctx, theta)),
        }
    }

    fn evaluate(&self, c: &SeedCache, x: &[f64], ineq: &mut [f64]) -> f64 {
        let ctx = &self.inner.ctx;
        let alpha = &x[ctx.m..];
        match c {
            SeedCache::Local(sorted) => {
                for (k, g) in ineq.chunks_mut(ctx.n_a).enumerate() {
                    let level = (1.0 - alpha[k]).clamp(0.0, 1.0);
                    let count = dominated_count(ctx.n_a, level);
                    g.fill(0.0);
                    g[0] = quantile_sorted(&sorted[k], level);
                    g[1..=count].copy_from_slice(&sorted[k][..count]);
                }
            }
            SeedCache::Global(vc) => {
                let mut scratch = Vec::new();
                for (k, g) in ineq.chunks_mut(ctx.n_a).enumerate() {
                    let (w, _) = weights_with(&vc.values, k, &vc.fp[k], alpha[k], ctx.cfg.alpha_e[k], ctx.cfg.gamma, &mut scratch);
                    let z: Vec<f64> = (0..ctx.n_a)
                        .map(|i| {
                            w.iter()
                                .enumerate()
                                .map(|(j, wj)| wj * vc.values.get(k, i, j))
                                .fold(f64::NEG_INFINITY, f64::max)
                        })
                        .collect();
                    quantile_block(&z, (1.0 - alpha[k]).clamp(0.0, 1.0), &mut scratch, g);
                }
            }
        }
        self.omega.iter().zip(alpha).map(|(w, a)| w * a).sum()
    }
}

// ---------------------------------------------------------------------------
// moment programs

struct MomentAverse<'a> {
    ctx: Ctx<'a>,
    moment: &'a MomentSpec,
}

struct MomentCache {
    q: Vec<f64>,
    h: Vec<f64>,
}

fn moment_cache(ctx: &Ctx, moment: &MomentSpec, theta: &[f64]) -> MomentCache {
    let mut scratch = Vec::new();
    let values = ctx.values(theta);
    MomentCache {
        q: scenario_quantiles(&values, &ctx.cfg.alpha_e, &mut scratch),
        h: ctx.response_quantiles(moment, theta, &mut scratch),
    }
}

/// Mean of `h` with weights `exp(−κ ξ_i)`.
fn weighted_mean(h: &[f64], xi: &[f64], kappa: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (hi, x) in h.iter().zip(xi) {
        let w = (-kappa * x.max(0.0)).exp();
        num += w * hi;
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        h.iter().sum::<f64>() / h.len() as f64
    }
}

impl NlpModel for MomentAverse<'_> {
    type Cache = MomentCache;

    fn dim(&self) -> usize {
        self.ctx.m + 1 + self.ctx.n_a
    }

    fn n_ineq(&self) -> usize {
        self.ctx.n_r * self.ctx.n_a + 1
    }

    fn n_cached(&self) -> usize {
        self.ctx.m
    }

    fn prepare(&self, x: &[f64]) -> MomentCache {
        moment_cache(&self.ctx, self.moment, &x[..self.ctx.m])
    }

    fn evaluate(&self, c: &MomentCache, x: &[f64], ineq: &mut [f64]) -> f64 {
        let ctx = &self.ctx;
        let lambda = x[ctx.m];
        let xi = &x[ctx.m + 1..];
        let n = ctx.n_r * ctx.n_a;
        for idx in 0..n {
            ineq[idx] = c.q[idx] - xi[idx % ctx.n_a];
        }
        ineq[n] = weighted_mean(&c.h, xi, ctx.cfg.kappa) - lambda;
        lambda + ctx.cfg.rho * xi.iter().sum::<f64>()
    }
}

struct MomentAgnostic<'a> {
    ctx: Ctx<'a>,
    moment: &'a MomentSpec,
    alpha_a: f64,
}

struct PrefixCache {
    /// Requirement quantiles `[k · n_a + i]`.
    q: Vec<f64>,
    /// Mean of the responses not above the scenario's own response.
    prefix_mean: Vec<f64>,
}

impl NlpModel for MomentAgnostic<'_> {
    type Cache = PrefixCache;

    fn dim(&self) -> usize {
        self.ctx.m + 1
    }

    fn n_ineq(&self) -> usize {
        1 + self.ctx.n_a * (self.ctx.n_r + 1)
    }

    fn n_cached(&self) -> usize {
        self.ctx.m
    }

    fn prepare(&self, x: &[f64]) -> PrefixCache {
        let ctx = &self.ctx;
        let mc = moment_cache(ctx, self.moment, &x[..ctx.m]);
        let n_a = ctx.n_a;
        let mut order: Vec<usize> = (0..n_a).collect();
        order.sort_by(|&a, &b| mc.h[a].total_cmp(&mc.h[b]).then(a.cmp(&b)));
        let mut prefix_mean = vec![0.0; n_a];
        let mut sum = 0.0;
        for (u, &i) in order.iter().enumerate() {
            sum += mc.h[i];
            prefix_mean[i] = sum / (u + 1) as f64;
        }
        PrefixCache { q: mc.q, prefix_mean }
    }

    fn evaluate(&self, c: &PrefixCache, x: &[f64], ineq: &mut [f64]) -> f64 {
        let (n_a, n_r) = (self.ctx.n_a, self.ctx.n_r);
        let lambda = x[self.ctx.m];
        let g: Vec<f64> = (0..n_a)
            .map(|i| {
                (0..n_r)
                    .map(|k| c.q[k * n_a + i])
                    .fold(c.prefix_mean[i] - lambda, f64::max)
            })
            .collect();
        // Scenarios ranked at or below the quantile slot contribute each part
        // of their maximum; off the grid the interpolated quantile is added.
        let level = 1.0 - self.alpha_a;
        let (q, mut ranked) = quantile_and_dominated(&g, level, &mut Vec::new());
        ineq.fill(0.0);
        match grid_slot(n_a, level) {
            Some(p) => {
                let mut order: Vec<usize> = (0..n_a).collect();
                order.sort_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)));
                order.truncate(p + 1);
                ranked = order;
            }
            None => ineq[0] = q,
        }
        for (slot, &i) in ineq[1..].chunks_mut(n_r + 1).zip(&ranked) {
            slot[0] = c.prefix_mean[i] - lambda;
            for k in 0..n_r {
                slot[k + 1] = c.q[k * n_a + i];
            }
        }
        lambda
    }
}

// ---------------------------------------------------------------------------
// public solvers

fn status_of(r: &NlpResult) -> SolverStatus {
    r.status
}

fn assemble(
    tag: FormulationTag,
    ctx: &Ctx,
    r: NlpResult,
    xi: Option<Vec<f64>>,
    lambda: Option<f64>,
    alpha_a_star: Option<Vec<f64>>,
    global_alpha_a: Option<Vec<f64>>,
) -> SolveResult {
    let theta = ctx.theta(&r.x);
    let values = ctx.values(&theta);
    let outliers = outliers_from_values(&values, &ctx.cfg.alpha_e);
    let global = global_alpha_a.map(|a| global_outliers(&values, &a, ctx.cfg));
    let objective = lambda.unwrap_or_else(|| ctx.spec.objective(&theta));
    SolveResult {
        formulation: tag.to_string(),
        status: status_of(&r),
        restarts_used: r.diagnostics.starts,
        theta_star: theta,
        xi_star: xi,
        lambda_star: lambda,
        alpha_a_star,
        objective,
        program_value: r.f,
        aleatory_outliers: outliers.aleatory,
        epistemic_outliers: outliers.epistemic,
        global_epistemic_outliers: global,
        diagnostics: r.diagnostics,
    }
}

/// Minimizes `J(θ) + ρΣξ_i` subject to `q_{k,i}(θ) ≤ ξ_i`, where `q_{k,i}` is
/// the `1 − α_{e,k}` quantile of the `i`-th pseudo-distribution.
pub fn solve_risk_averse_local(
    spec: &ProblemSpec,
    data: &ScenarioData,
    cfg: &AlphaConfig,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let ctx = Ctx::new(spec, data, cfg)?;
    let model = AverseLocal { ctx };
    let starts = theta_starts(spec, opts)?
        .into_iter()
        .map(|t| {
            let c = model.prepare(&t);
            let mut x = t;
            x.extend(slack_start(&c.q, model.ctx.n_a));
            x
        })
        .collect();
    let problem = NlpProblem {
        bounds: slack_bounds(spec.bounds(), model.ctx.n_a),
        model,
        starts,
    };
    let r = minimize(&problem, &opts.nlp)?;
    let xi = r.x[problem.model.ctx.m..].to_vec();
    Ok(assemble(FormulationTag::RiskAverseLocal, &problem.model.ctx, r, Some(xi), None, None, None))
}

/// Minimizes `J(θ) + ρΣξ_i` subject to `w_{k,j} r_k(θ, a_i, e_j) ≤ ξ_i`, with
/// epistemic weights recomputed from the current `(θ, ξ)` at every evaluation.
pub fn solve_risk_averse_global(
    spec: &ProblemSpec,
    data: &ScenarioData,
    cfg: &AlphaConfig,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let ctx = Ctx::new(spec, data, cfg)?;
    let model = AverseGlobal { ctx };
    let starts = theta_starts(spec, opts)?
        .into_iter()
        .map(|t| {
            let c = model.prepare(&t);
            let z = model.weighted_max(&c, 0.0);
            let mut x = t;
            x.extend(z.iter().map(|v| v.max(0.0)));
            x
        })
        .collect();
    let problem = NlpProblem {
        bounds: slack_bounds(spec.bounds(), model.ctx.n_a),
        model,
        starts,
    };
    let r = minimize(&problem, &opts.nlp)?;
    let xi = r.x[problem.model.ctx.m..].to_vec();
    let frac = relaxed_fraction(&xi);
    let alpha = vec![frac; problem.model.ctx.n_r];
    Ok(assemble(
        FormulationTag::RiskAverseGlobal,
        &problem.model.ctx,
        r,
        Some(xi),
        None,
        None,
        Some(alpha),
    ))
}

fn solve_agnostic(
    spec: &ProblemSpec,
    data: &ScenarioData,
    cfg: &AlphaConfig,
    opts: &SolveOptions,
    scope: OutlierScope,
) -> Result<SolveResult> {
    if cfg.alpha_a.iter().any(|a| *a >= 1.0) {
        return Err(Error::Input("aleatory fractions must be below 1".into()));
    }
    let ctx = Ctx::new(spec, data, cfg)?;
    let problem = NlpProblem {
        model: Agnostic { ctx, scope },
        bounds: spec.bounds().clone(),
        starts: theta_starts(spec, opts)?,
    };
    let r = minimize(&problem, &opts.nlp)?;
    let (tag, global) = match scope {
        OutlierScope::Global => (FormulationTag::RiskAgnosticGlobal, Some(cfg.alpha_a.clone())),
        OutlierScope::Local => (FormulationTag::RiskAgnosticLocal, None),
    };
    Ok(assemble(tag, &problem.model.ctx, r, None, None, None, global))
}

/// Minimizes `J(θ)` subject to the `1 − α_{a,k}` quantile of the weighted
/// worst-case values `max_j w_{k,j} r_k(θ, a_i, e_j)` being nonpositive.
pub fn solve_risk_agnostic_global(
    spec: &ProblemSpec,
    data: &ScenarioData,
    cfg: &AlphaConfig,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    solve_agnostic(spec, data, cfg, opts, OutlierScope::Global)
}

/// Minimizes `J(θ)` subject to the `1 − α_{a,k}` quantile of the
/// per-scenario quantiles `q_{k,i}(θ)` being nonpositive.
pub fn solve_risk_agnostic_local(
    spec: &ProblemSpec,
    data: &ScenarioData,
    cfg: &AlphaConfig,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    solve_agnostic(spec, data, cfg, opts, OutlierScope::Local)
}

/// Minimizes `ωᵀα_a` over `(θ, α_a)` subject to the risk-agnostic constraints
/// with decision-valued fractions. The returned `alpha_a_star` is a lower
/// bound on the fractions that make the risk-agnostic program feasible.
pub fn solve_feasibility_seed(
    spec: &ProblemSpec,
    data: &ScenarioData,
    cfg: &AlphaConfig,
    omega: &[f64],
    scope: OutlierScope,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    check_dim("omega", spec.n_r(), omega.len())?;
    if omega.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Input("omega entries must be positive".into()));
    }
    let ctx = Ctx::new(spec, data, cfg)?;
    let model = Seed {
        inner: Agnostic { ctx, scope },
        omega: omega.to_vec(),
    };
    let n_r = model.inner.ctx.n_r;
    let starts = theta_starts(spec, opts)?
        .into_iter()
        .map(|t| {
            let c = model.prepare(&t);
            let alpha: Vec<f64> = match &c {
                SeedCache::Local(sorted) => sorted.iter().map(|z| 1.0 - cdf_sorted(z, 0.0)).collect(),
                SeedCache::Global(_) => vec![1.0; n_r],
            };
            let mut x = t;
            x.extend(alpha);
            x
        })
        .collect();
    let bounds = spec.bounds().extend(&Bounds {
        lower: vec![0.0; n_r],
        upper: vec![1.0; n_r],
    });
    let problem = NlpProblem { model, bounds, starts };
    let r = minimize(&problem, &opts.nlp)?;
    let ctx = &problem.model.inner.ctx;
    let alpha = r.x[ctx.m..].to_vec();
    let global = (scope == OutlierScope::Global).then(|| alpha.clone());
    Ok(assemble(FormulationTag::FeasibilitySeed, ctx, r, None, None, Some(alpha), global))
}

/// Minimizes `λ + ρΣξ_i` subject to the risk-averse local constraints and
/// `mean_w(H) ≤ λ`, where `H_i` is the `1 − α_e` response quantile of scenario
/// `i` and the weights are `exp(−κ ξ_i)`.
pub fn solve_moment_risk_averse(
    spec: &ProblemSpec,
    data: &ScenarioData,
    cfg: &AlphaConfig,
    moment: &MomentSpec,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    crate::error::check_fraction("moment alpha_e", moment.alpha_e)?;
    let ctx = Ctx::new(spec, data, cfg)?;
    let model = MomentAverse { ctx, moment };
    let n_a = model.ctx.n_a;
    let starts = theta_starts(spec, opts)?
        .into_iter()
        .map(|t| {
            let c = model.prepare(&t);
            let xi = slack_start(&c.q, n_a);
            let lambda = weighted_mean(&c.h, &xi, model.ctx.cfg.kappa);
            let mut x = t;
            x.push(lambda);
            x.extend(xi);
            x
        })
        .collect();
    let mut bounds = spec.bounds().extend(&Bounds {
        lower: vec![f64::NEG_INFINITY],
        upper: vec![f64::INFINITY],
    });
    bounds = slack_bounds(&bounds, n_a);
    let problem = NlpProblem { model, bounds, starts };
    let r = minimize(&problem, &opts.nlp)?;
    let m = problem.model.ctx.m;
    let lambda = r.x[m];
    let xi = r.x[m + 1..].to_vec();
    Ok(assemble(
        FormulationTag::MomentRiskAverse,
        &problem.model.ctx,
        r,
        Some(xi),
        Some(lambda),
        None,
        None,
    ))
}

/// Minimizes `λ` subject to the `1 − α_a` quantile of
/// `G_i = max(mean{H_d : H_d ≤ H_i} − λ, max_k q_{k,i})` being nonpositive.
/// All entries of `cfg.alpha_a` must be equal.
pub fn solve_moment_risk_agnostic(
    spec: &ProblemSpec,
    data: &ScenarioData,
    cfg: &AlphaConfig,
    moment: &MomentSpec,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    crate::error::check_fraction("moment alpha_e", moment.alpha_e)?;
    let ctx = Ctx::new(spec, data, cfg)?;
    let alpha_a = cfg.alpha_a[0];
    if cfg.alpha_a.iter().any(|a| *a != alpha_a) {
        return Err(Error::Input(
            "the moment risk-agnostic program takes a single aleatory fraction".into(),
        ));
    }
    if alpha_a >= 1.0 {
        return Err(Error::Input("aleatory fraction must be below 1".into()));
    }
    let model = MomentAgnostic { ctx, moment, alpha_a };
    let starts = theta_starts(spec, opts)?
        .into_iter()
        .map(|t| {
            let c = model.prepare(&t);
            let lambda = c.prefix_mean.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
            let mut x = t;
            x.push(lambda);
            x
        })
        .collect();
    let bounds = spec.bounds().extend(&Bounds {
        lower: vec![f64::NEG_INFINITY],
        upper: vec![f64::INFINITY],
    });
    let problem = NlpProblem { model, bounds, starts };
    let r = minimize(&problem, &opts.nlp)?;
    let lambda = r.x[problem.model.ctx.m];
    Ok(assemble(
        FormulationTag::MomentRiskAgnostic,
        &problem.model.ctx,
        r,
        None,
        Some(lambda),
        None,
        None,
    ))
}

/// Dispatches on the formulation. The feasibility seed uses unit weights and
/// local outliers here.
pub fn solve(
    formulation: &Formulation,
    spec: &ProblemSpec,
    data: &ScenarioData,
    cfg: &AlphaConfig,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    match formulation.tag {
        FormulationTag::RiskAverseGlobal => solve_risk_averse_global(spec, data, cfg, opts),
        FormulationTag::RiskAverseLocal => solve_risk_averse_local(spec, data, cfg, opts),
        FormulationTag::RiskAgnosticGlobal => solve_risk_agnostic_global(spec, data, cfg, opts),
        FormulationTag::RiskAgnosticLocal => solve_risk_agnostic_local(spec, data, cfg, opts),
        FormulationTag::FeasibilitySeed => {
            solve_feasibility_seed(spec, data, cfg, &vec![1.0; spec.n_r()], OutlierScope::Local, opts)
        }
        FormulationTag::MomentRiskAverse | FormulationTag::MomentRiskAgnostic => {
            let moment = formulation
                .moment
                .as_ref()
                .ok_or_else(|| Error::Input("moment programs need a response function".into()))?;
            if formulation.tag == FormulationTag::MomentRiskAverse {
                solve_moment_risk_averse(spec, data, cfg, moment, opts)
            } else {
                solve_moment_risk_agnostic(spec, data, cfg, moment, opts)
            }
        }
    }
}

/// Counts the aleatory scenarios a heavily penalized risk-averse design still
/// violates; their fraction is a simple feasible choice of `α_a`.
pub fn count_violations_risk_averse(
    spec: &ProblemSpec,
    data: &ScenarioData,
    cfg: &AlphaConfig,
    opts: &SolveOptions,
) -> Result<usize> {
    let cfg = cfg.clone().with_rho(1e6);
    Ok(solve_risk_averse_local(spec, data, &cfg, opts)?.aleatory_outliers.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Matrix;
    use std::sync::Arc;

    fn fast_opts() -> SolveOptions {
        SolveOptions {
            nlp: NlpOptions {
                n_starts: 4,
                ..Default::default()
            },
            theta_starts: vec![],
        }
    }

    /// r(θ, a, e) = a + e − θ on θ ∈ [−10, 10] with objective θ.
    fn shift_problem() -> ProblemSpec {
        ProblemSpec::new(
            "shift",
            Arc::new(|t: &[f64]| t[0]),
            vec![Arc::new(|t: &[f64], a: &[f64], e: &[f64]| a[0] + e[0] - t[0]) as Requirement],
            Bounds::new(vec![-10.0], vec![10.0]).unwrap(),
            1,
            1,
        )
        .unwrap()
    }

    fn column(v: &[f64]) -> Matrix {
        Matrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn formulation_requires_moment_iff_moment_tag() {
        assert!(Formulation::new(FormulationTag::RiskAverseLocal, None).is_ok());
        assert!(Formulation::new(FormulationTag::MomentRiskAverse, None).is_err());
        let m = MomentSpec {
            response: Arc::new(|_: &[f64], _: &[f64], _: &[f64]| 5.0),
            kind: MomentKind::Mean,
            alpha_e: 0.0,
        };
        assert!(Formulation::new(FormulationTag::RiskAgnosticLocal, Some(m.clone())).is_err());
        assert!(Formulation::new(FormulationTag::MomentRiskAgnostic, Some(m)).is_ok());
    }

    #[test]
    fn robust_shift_design() {
        let spec = shift_problem();
        let data = ScenarioData::new(column(&[0.0, 1.0, 3.0]), column(&[0.0, 0.5])).unwrap();
        let cfg = AlphaConfig::zeros(1);
        let r = solve_risk_averse_local(&spec, &data, &cfg, &fast_opts()).unwrap();
        assert!((r.theta_star[0] - 3.5).abs() < 1e-5, "{:?}", r.theta_star);
        assert!(r.xi_star.unwrap().iter().all(|x| *x < 1e-6));
        assert!(r.aleatory_outliers.is_empty());
        let r = solve_risk_agnostic_local(&spec, &data, &cfg, &fast_opts()).unwrap();
        assert!((r.theta_star[0] - 3.5).abs() < 1e-5);
    }

    #[test]
    fn single_epistemic_scenario() {
        let spec = shift_problem();
        let data = ScenarioData::new(column(&[0.0, 2.0]), column(&[0.25])).unwrap();
        let r = solve_risk_averse_local(&spec, &data, &AlphaConfig::zeros(1), &fast_opts()).unwrap();
        assert!((r.theta_star[0] - 2.25).abs() < 1e-5);
    }

    #[test]
    fn risk_agnostic_local_matches_grid_search() {
        // two aleatory and two epistemic scenarios, linear requirement
        let spec = shift_problem();
        let data = ScenarioData::new(column(&[0.0, 4.0]), column(&[0.0, 1.0])).unwrap();
        let cfg = AlphaConfig::uniform(1, 0.5, 0.0);
        let r = solve_risk_agnostic_local(&spec, &data, &cfg, &fast_opts()).unwrap();
        // constraint: midpoint of (1 − θ, 5 − θ) ≤ 0, i.e. θ ≥ 3
        let best = (0..=20_000)
            .map(|s| -10.0 + s as f64 * 1e-3)
            .filter(|t| {
                let n = [1.0 - t, 5.0 - t];
                crate::ecdf::quantile_of(&n, 0.5) <= 0.0
            })
            .fold(f64::INFINITY, f64::min);
        assert!((r.theta_star[0] - best).abs() < 1e-3, "{} vs {best}", r.theta_star[0]);
    }

    #[test]
    fn feasibility_seed_on_robust_instance_is_zero() {
        let spec = shift_problem();
        let data = ScenarioData::new(column(&[0.0, 1.0, 2.0]), column(&[0.0, 0.1])).unwrap();
        let cfg = AlphaConfig::zeros(1);
        let r = solve_feasibility_seed(&spec, &data, &cfg, &[1.0], OutlierScope::Local, &fast_opts()).unwrap();
        assert!(r.alpha_a_star.unwrap()[0] < 1e-6);
    }

    #[test]
    fn feasibility_seed_with_unreachable_scenario() {
        // θ ≤ 10 cannot cover a = 50; the oracle enumerates θ on a grid
        let spec = shift_problem();
        let a = [0.0, 1.0, 2.0, 50.0];
        let data = ScenarioData::new(column(&a), column(&[0.0, 0.1])).unwrap();
        let cfg = AlphaConfig::zeros(1);
        let r = solve_feasibility_seed(&spec, &data, &cfg, &[1.0], OutlierScope::Local, &fast_opts()).unwrap();
        let needed = |t: f64| {
            let mut n: Vec<f64> = a.iter().map(|a| a + 0.1 - t).collect();
            crate::ecdf::sort_and_separate(&mut n);
            1.0 - cdf_sorted(&n, 0.0)
        };
        let oracle = (0..=2000).map(|s| needed(-10.0 + 0.01 * s as f64)).fold(f64::INFINITY, f64::min);
        let got = r.alpha_a_star.unwrap()[0];
        assert!((got - oracle).abs() < 1e-4, "{got} vs {oracle}");
        assert!(got > 0.5 / (a.len() - 1) as f64);
    }

    #[test]
    fn infeasible_agnostic_program_is_reported() {
        let spec = shift_problem();
        let data = ScenarioData::new(column(&[0.0, 50.0]), column(&[0.0, 0.1])).unwrap();
        let r = solve_risk_agnostic_local(&spec, &data, &AlphaConfig::zeros(1), &fast_opts()).unwrap();
        assert_eq!(r.status, SolverStatus::Infeasible);
    }

    #[test]
    fn constant_moment() {
        let spec = shift_problem();
        let data = ScenarioData::new(column(&[0.0, 1.0]), column(&[0.0, 0.1])).unwrap();
        let m = MomentSpec {
            response: Arc::new(|_: &[f64], _: &[f64], _: &[f64]| 5.0),
            kind: MomentKind::Mean,
            alpha_e: 0.0,
        };
        let cfg = AlphaConfig::zeros(1);
        let r = solve_moment_risk_averse(&spec, &data, &cfg, &m, &fast_opts()).unwrap();
        assert!((r.lambda_star.unwrap() - 5.0).abs() < 1e-5);
        let r = solve_moment_risk_agnostic(&spec, &data, &cfg, &m, &fast_opts()).unwrap();
        assert!((r.lambda_star.unwrap() - 5.0).abs() < 1e-5);
    }

    #[test]
    fn moment_programs_agree_without_outliers() {
        // response |θ − a| averaged over scenarios, requirement a − θ − 3 ≤ 0
        let spec = ProblemSpec::new(
            "moment",
            Arc::new(|_: &[f64]| 0.0),
            vec![Arc::new(|t: &[f64], a: &[f64], e: &[f64]| a[0] + e[0] - t[0] - 3.0) as Requirement],
            Bounds::new(vec![-5.0], vec![5.0]).unwrap(),
            1,
            1,
        )
        .unwrap();
        let data = ScenarioData::new(column(&[0.0, 1.0, 4.0]), column(&[0.0, 0.2])).unwrap();
        let m = MomentSpec {
            response: Arc::new(|t: &[f64], a: &[f64], _: &[f64]| (t[0] - a[0]).powi(2)),
            kind: MomentKind::Mean,
            alpha_e: 0.0,
        };
        let cfg = AlphaConfig::zeros(1);
        let averse = solve_moment_risk_averse(&spec, &data, &cfg, &m, &fast_opts()).unwrap();
        let agnostic = solve_moment_risk_agnostic(&spec, &data, &cfg, &m, &fast_opts()).unwrap();
        // unconstrained mean minimizer is θ = 5/3 but θ ≥ 1.2 is all that binds
        let l1 = averse.lambda_star.unwrap();
        let l2 = agnostic.lambda_star.unwrap();
        assert!((l1 - l2).abs() < 1e-4, "{l1} vs {l2}");
        assert!((averse.theta_star[0] - 5.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn moment_agnostic_rejects_mixed_fractions() {
        let spec = ProblemSpec::new(
            "two",
            Arc::new(|_: &[f64]| 0.0),
            vec![
                Arc::new(|_: &[f64], _: &[f64], _: &[f64]| -1.0) as Requirement,
                Arc::new(|_: &[f64], _: &[f64], _: &[f64]| -1.0) as Requirement,
            ],
            Bounds::new(vec![0.0], vec![1.0]).unwrap(),
            1,
            1,
        )
        .unwrap();
        let data = ScenarioData::new(column(&[0.0, 1.0]), column(&[0.0, 0.1])).unwrap();
        let mut cfg = AlphaConfig::zeros(2);
        cfg.alpha_a = vec![0.0, 0.1];
        let m = MomentSpec {
            response: Arc::new(|_: &[f64], _: &[f64], _: &[f64]| 1.0),
            kind: MomentKind::Mean,
            alpha_e: 0.0,
        };
        assert!(solve_moment_risk_agnostic(&spec, &data, &cfg, &m, &fast_opts()).is_err());
    }

    #[test]
    fn outliers_of_negative_values_are_empty() {
        let a = column(&[0.0, 1.0, 2.0]);
        let e = column(&[0.0, 1.0, 2.0]);
        let v = RequirementValues::compute_with(&[], &a, &e, 1, |_, _, a, e| -1.0 - a[0] - e[0]);
        let o = outliers_from_values(&v, &[0.5]);
        assert!(o.aleatory.is_empty());
        assert!(o.epistemic.iter().all(|s| s.len() <= 1));
        let o = outliers_from_values(&v, &[0.0]);
        assert!(o.epistemic.iter().all(Vec::is_empty));
    }

    #[test]
    fn outliers_match_enumeration() {
        let table = [
            [-1.0, 0.5, -2.0],
            [0.3, 0.4, 0.2],
            [-0.5, -0.1, -3.0],
        ];
        let a = column(&[0.0, 1.0, 2.0]);
        let e = column(&[0.0, 1.0, 2.0]);
        let v = RequirementValues::compute_with(&[], &a, &e, 1, |_, _, a, e| table[a[0] as usize][e[0] as usize]);
        let o = outliers_from_values(&v, &[0.5]);
        // brute force: the level-1/2 quantile of three values is the median
        let mut aleatory = Vec::new();
        let mut epistemic = Vec::new();
        for (i, row) in table.iter().enumerate() {
            let mut s = row.to_vec();
            s.sort_by(f64::total_cmp);
            let med = s[1];
            if med > OUTLIER_TOL {
                aleatory.push(i);
            }
            epistemic.push((0..3).filter(|&j| row[j] > med).collect::<Vec<_>>());
        }
        assert_eq!(o.aleatory, aleatory);
        assert_eq!(o.epistemic, epistemic);
    }

    #[test]
    fn relaxed_program_admits_robust_designs() {
        // feasibility at α_e = 0 implies feasibility at α_e > 0
        let spec = shift_problem();
        let a = column(&[0.0, 1.0, 2.0, 3.0]);
        let e = column(&[0.0, 0.3, 0.6, 0.9, 1.2]);
        for t in [3.0, 4.2, 5.0, 7.5] {
            let v = RequirementValues::compute(&spec, &[t], &a, &e);
            let strict = scenario_quantiles(&v, &[0.0], &mut Vec::new());
            if strict.iter().all(|q| *q <= 0.0) {
                for alpha in [0.25, 0.5, 0.75] {
                    let relaxed = scenario_quantiles(&v, &[alpha], &mut Vec::new());
                    assert!(relaxed.iter().all(|q| *q <= 0.0));
                }
            }
        }
    }
}
