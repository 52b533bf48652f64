//! Box- and inequality-constrained nonlinear minimization.
//!
//! Problems are solved by an exterior quadratic penalty
//! `Φ_μ(x) = f(x) + μ Σ max(0, g_i(x))²` whose weight `μ` grows geometrically.
//! Each penalty subproblem is minimized by a projected BFGS method with
//! central finite-difference gradients, and the whole procedure is repeated
//! from several start points.
//!
//! Models expose an optional evaluation cache: [`NlpModel::prepare`] does the
//! expensive work that depends on the leading [`NlpModel::n_cached`]
//! coordinates, so finite-difference steps in the remaining coordinates are
//! cheap.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::types::Bounds;

/// A differentiable-almost-everywhere objective with inequality constraints
/// `g_i(x) ≤ 0`.
pub trait NlpModel: Sync {
    type Cache: Send;

    fn dim(&self) -> usize;

    fn n_ineq(&self) -> usize;

    /// Number of leading coordinates the cache depends on.
    fn n_cached(&self) -> usize {
        self.dim()
    }

    fn prepare(&self, x: &[f64]) -> Self::Cache;

    /// Returns the objective and writes the constraint values into `ineq`.
    fn evaluate(&self, cache: &Self::Cache, x: &[f64], ineq: &mut [f64]) -> f64;
}

type EvalFn = dyn Fn(&[f64], &mut [f64]) -> f64 + Send + Sync;

/// Model built from a single closure returning the objective and filling the
/// constraint values.
pub struct FnModel {
    dim: usize,
    n_ineq: usize,
    eval: Box<EvalFn>,
}

impl FnModel {
    pub fn new<F>(dim: usize, n_ineq: usize, eval: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            dim,
            n_ineq,
            eval: Box::new(eval),
        }
    }
}

impl NlpModel for FnModel {
    type Cache = ();

    fn dim(&self) -> usize {
        self.dim
    }

    fn n_ineq(&self) -> usize {
        self.n_ineq
    }

    fn n_cached(&self) -> usize {
        0
    }

    fn prepare(&self, _x: &[f64]) {}

    fn evaluate(&self, _cache: &(), x: &[f64], ineq: &mut [f64]) -> f64 {
        (self.eval)(x, ineq)
    }
}

/// A model, its box and the start points. An empty start list asks for a
/// Latin-hypercube design, which needs finite bounds.
pub struct NlpProblem<M> {
    pub model: M,
    pub bounds: Bounds,
    pub starts: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NlpOptions {
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub penalty_max: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub tol_x: f64,
    pub tol_f: f64,
    pub tol_con: f64,
    /// Latin-hypercube starts generated when a problem brings none.
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for NlpOptions {
    fn default() -> Self {
        Self {
            penalty_init: 10.0,
            penalty_growth: 10.0,
            penalty_max: 1e12,
            fd_step: 1e-6,
            max_outer: 12,
            max_inner: 300,
            tol_x: 1e-10,
            tol_f: 1e-13,
            tol_con: 1e-6,
            n_starts: 8,
            seed: 0,
        }
    }
}

impl NlpOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.penalty_init,
            self.penalty_max,
            self.fd_step,
            self.tol_x,
            self.tol_f,
            self.tol_con,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.penalty_growth > 1.0) {
            return Err(Error::Input(
                "penalty growth must exceed 1 and tolerances must be positive".into(),
            ));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::Input("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverStatus {
    Converged,
    MaxIter,
    Infeasible,
    Failed,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NlpDiagnostics {
    pub starts: usize,
    pub feasible_starts: usize,
    pub best_start: usize,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub evaluations: usize,
    pub final_penalty: f64,
    pub max_violation: f64,
    /// Largest constraint violation after each outer iteration of the best start.
    pub infeasibility_history: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct NlpResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub max_violation: f64,
    pub status: SolverStatus,
    pub diagnostics: NlpDiagnostics,
}

/// Central finite-difference gradient with step `step · max(1, |x_i|)`.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], step: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite function value when perturbing coordinate {i}"
            )));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Latin-hypercube sample of `n` points in a finite box.
pub fn latin_hypercube<R: Rng + ?Sized>(bounds: &Bounds, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let d = bounds.dim();
    let mut points = vec![vec![0.0; d]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for c in 0..d {
        strata.shuffle(rng);
        let (lo, hi) = (bounds.lower[c], bounds.upper[c]);
        for (p, s) in points.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            p[c] = lo + (hi - lo) * (*s as f64 + u) / n as f64;
        }
    }
    points
}

/// Minimizes the problem from every start and returns the best run.
///
/// Runs are ranked by feasibility, then objective, then start index, so the
/// result does not depend on how the starts were scheduled.
pub fn minimize<M: NlpModel>(problem: &NlpProblem<M>, opts: &NlpOptions) -> Result<NlpResult> {
    opts.validate()?;
    let dim = problem.model.dim();
    check_dim("nlp bounds", dim, problem.bounds.dim())?;
    let starts = if problem.starts.is_empty() {
        if !problem.bounds.is_finite() {
            return Err(Error::Input(
                "start points are required when bounds are infinite".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        latin_hypercube(&problem.bounds, opts.n_starts.max(1), &mut rng)
    } else {
        problem.starts.clone()
    };
    for (s, x0) in starts.iter().enumerate() {
        check_dim("start point", dim, x0.len())?;
        if !problem.bounds.contains(x0) {
            return Err(Error::Input(format!("start point {s} lies outside the bounds")));
        }
    }

    let solver = Solver {
        model: &problem.model,
        bounds: &problem.bounds,
        opts,
    };
    let runs: Vec<Run> = starts.par_iter().map(|x0| solver.run(x0)).collect();

    let feasible_starts = runs.iter().filter(|r| r.feasible).count();
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.f.is_finite())
        .min_by(|(ia, a), (ib, b)| {
            b.feasible
                .cmp(&a.feasible)
                .then(a.f.total_cmp(&b.f))
                .then(ia.cmp(ib))
        })
        .map(|(i, _)| i);

    let inner_iterations = runs.iter().map(|r| r.inner_iterations).sum();
    let evaluations = runs.iter().map(|r| r.evaluations).sum();
    let Some(bi) = best else {
        log::warn!("every start produced non-finite values");
        return Ok(NlpResult {
            x: starts[0].clone(),
            f: f64::NAN,
            max_violation: f64::INFINITY,
            status: SolverStatus::Failed,
            diagnostics: NlpDiagnostics {
                starts: starts.len(),
                inner_iterations,
                evaluations,
                ..Default::default()
            },
        });
    };
    let run = &runs[bi];
    let status = if !run.feasible {
        SolverStatus::Infeasible
    } else if run.converged {
        SolverStatus::Converged
    } else {
        SolverStatus::MaxIter
    };
    Ok(NlpResult {
        x: run.x.clone(),
        f: run.f,
        max_violation: run.violation,
        status,
        diagnostics: NlpDiagnostics {
            starts: starts.len(),
            feasible_starts,
            best_start: bi,
            outer_iterations: run.history.len(),
            inner_iterations,
            evaluations,
            final_penalty: run.penalty,
            max_violation: run.violation,
            infeasibility_history: run.history.clone(),
        },
    })
}

struct Run {
    x: Vec<f64>,
    f: f64,
    violation: f64,
    feasible: bool,
    converged: bool,
    penalty: f64,
    history: Vec<f64>,
    inner_iterations: usize,
    evaluations: usize,
}

struct Solver<'a, M> {
    model: &'a M,
    bounds: &'a Bounds,
    opts: &'a NlpOptions,
}

/// Objective, constraint violation and penalized value at a point.
struct Point {
    f: f64,
    violation: f64,
    phi: f64,
}

struct Workspace {
    ineq: Vec<f64>,
    evaluations: usize,
}

impl<'a, M: NlpModel> Solver<'a, M> {
    fn run(&self, x0: &[f64]) -> Run {
        let mut ws = Workspace {
            ineq: vec![0.0; self.model.n_ineq()],
            evaluations: 0,
        };
        let mut x = x0.to_vec();
        self.bounds.project(&mut x);
        let mut mu = self.opts.penalty_init;
        let mut history = Vec::new();
        let mut inner_total = 0;
        let mut converged = false;
        let mut point = self.point(&x, mu, &mut ws);
        for _ in 0..self.opts.max_outer {
            let (inner_ok, iters) = self.bfgs(&mut x, mu, &mut ws);
            inner_total += iters;
            point = self.point(&x, mu, &mut ws);
            if !point.phi.is_finite() {
                break;
            }
            history.push(point.violation);
            if point.violation <= self.opts.tol_con && inner_ok {
                converged = true;
                break;
            }
            if mu >= self.opts.penalty_max {
                break;
            }
            mu = (mu * self.opts.penalty_growth).min(self.opts.penalty_max);
        }
        let mut f = if point.phi.is_finite() { point.f } else { f64::NAN };
        // a feasible start is never worsened
        let mut start = x0.to_vec();
        self.bounds.project(&mut start);
        let at_start = self.point(&start, mu, &mut ws);
        let start_feasible = at_start.f.is_finite() && at_start.violation <= self.opts.tol_con;
        if start_feasible && (point.violation > self.opts.tol_con || !(f <= at_start.f)) {
            x = start;
            f = at_start.f;
            point = at_start;
        }
        Run {
            feasible: point.violation <= self.opts.tol_con,
            x,
            f,
            violation: point.violation,
            converged,
            penalty: mu,
            history,
            inner_iterations: inner_total,
            evaluations: ws.evaluations,
        }
    }

    fn eval_cached(&self, cache: &M::Cache, x: &[f64], mu: f64, ws: &mut Workspace) -> Point {
        ws.evaluations += 1;
        let f = self.model.evaluate(cache, x, &mut ws.ineq);
        let mut violation = 0.0f64;
        let mut pen = 0.0;
        for g in &ws.ineq {
            if g.is_nan() {
                violation = f64::INFINITY;
                pen = f64::INFINITY;
                break;
            }
            if *g > 0.0 {
                violation = violation.max(*g);
                pen += g * g;
            }
        }
        let phi = if f.is_finite() { f + mu * pen } else { f64::NAN };
        Point {
            f,
            violation,
            phi: if phi.is_nan() { f64::INFINITY } else { phi },
        }
    }

    fn point(&self, x: &[f64], mu: f64, ws: &mut Workspace) -> Point {
        let cache = self.model.prepare(x);
        self.eval_cached(&cache, x, mu, ws)
    }

    /// Penalized value and its finite-difference gradient.
    fn value_and_grad(&self, x: &[f64], mu: f64, ws: &mut Workspace) -> (f64, Vec<f64>) {
        let n = x.len();
        let n_cached = self.model.n_cached().min(n);
        let base_cache = self.model.prepare(x);
        let phi0 = self.eval_cached(&base_cache, x, mu, ws).phi;
        let mut grad = vec![0.0; n];
        let mut probe = x.to_vec();
        for i in 0..n {
            let h = self.opts.fd_step * x[i].abs().max(1.0);
            let (lo, hi) = (self.bounds.lower[i], self.bounds.upper[i]);
            let up = (x[i] + h).min(hi);
            let down = (x[i] - h).max(lo);
            let mut eval_at = |v: f64, ws: &mut Workspace| -> f64 {
                probe[i] = v;
                let phi = if i < n_cached {
                    let cache = self.model.prepare(&probe);
                    self.eval_cached(&cache, &probe, mu, ws).phi
                } else {
                    self.eval_cached(&base_cache, &probe, mu, ws).phi
                };
                probe[i] = x[i];
                phi
            };
            grad[i] = if up > x[i] && down < x[i] {
                let (fu, fd) = (eval_at(up, ws), eval_at(down, ws));
                (fu - fd) / (up - down)
            } else if up > x[i] {
                (eval_at(up, ws) - phi0) / (up - x[i])
            } else if down < x[i] {
                (phi0 - eval_at(down, ws)) / (x[i] - down)
            } else {
                0.0
            };
            if !grad[i].is_finite() {
                grad[i] = 0.0;
            }
        }
        (phi0, grad)
    }

    /// Projected BFGS on `Φ_μ`; returns whether it stopped on a convergence
    /// test and the number of iterations.
    fn bfgs(&self, x: &mut [f64], mu: f64, ws: &mut Workspace) -> (bool, usize) {
        let n = x.len();
        let (lo, hi) = (&self.bounds.lower, &self.bounds.upper);
        let (mut phi, mut g) = self.value_and_grad(x, mu, ws);
        if !phi.is_finite() {
            return (false, 0);
        }
        let mut h = identity(n);
        let mut fresh = true;
        let mut trial = vec![0.0; n];
        for it in 0..self.opts.max_inner {
            let free: Vec<bool> = (0..n)
                .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
                .collect();
            if free.iter().zip(&g).all(|(f, gi)| !*f || *gi == 0.0) {
                return (true, it);
            }
            let mut d = direction(&h, &g, &free);
            let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                h = identity(n);
                fresh = true;
                d = direction(&h, &g, &free);
                slope = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            }
            let mut t = 1.0;
            if fresh {
                let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let cap = 0.1 * (1.0 + xmax);
                if dmax > cap {
                    t = cap / dmax;
                }
            }
            let mut accepted = None;
            for _ in 0..60 {
                for i in 0..n {
                    trial[i] = (x[i] + t * d[i]).clamp(lo[i], hi[i]);
                }
                let p = self.point(&trial, mu, ws);
                let decrease: f64 = trial
                    .iter()
                    .zip(x.iter())
                    .zip(&g)
                    .map(|((a, b), gi)| (a - b) * gi)
                    .sum();
                if p.phi.is_finite() && p.phi <= phi + 1e-4 * decrease.min(0.0) && decrease < 0.0 {
                    accepted = Some(p.phi);
                    break;
                }
                t *= 0.5;
            }
            let Some(phi_new) = accepted else {
                if fresh {
                    // no descent even along the projected gradient
                    return (true, it);
                }
                h = identity(n);
                fresh = true;
                continue;
            };
            let s: Vec<f64> = trial.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
            let (_, g_new) = self.value_and_grad(&trial, mu, ws);
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
            let yy: f64 = y.iter().map(|v| v * v).sum();
            let ss: f64 = s.iter().map(|v| v * v).sum();
            if sy > 1e-12 * (ss * yy).sqrt() && sy > 0.0 {
                if fresh {
                    let scale = sy / yy;
                    for i in 0..n {
                        h[i * n + i] = scale;
                    }
                }
                bfgs_update(&mut h, &s, &y, sy);
                fresh = false;
            }
            let step = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let xmax = trial.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let drop = phi - phi_new;
            x.copy_from_slice(&trial);
            phi = phi_new;
            g = g_new;
            if step <= self.opts.tol_x * (1.0 + xmax) || drop <= self.opts.tol_f * (1.0 + phi.abs()) {
                return (true, it + 1);
            }
        }
        (false, self.opts.max_inner)
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

/// `−H g` restricted to the free coordinates.
fn direction(h: &[f64], g: &[f64], free: &[bool]) -> Vec<f64> {
    let n = g.len();
    let mut d = vec![0.0; n];
    for i in 0..n {
        if !free[i] {
            continue;
        }
        let row = &h[i * n..(i + 1) * n];
        let mut acc = 0.0;
        for j in 0..n {
            if free[j] {
                acc += row[j] * g[j];
            }
        }
        d[i] = -acc;
    }
    d
}

/// Inverse-Hessian BFGS update `H ← (I − ρsyᵀ)H(I − ρysᵀ) + ρssᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum())
        .collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
