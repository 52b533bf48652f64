//! Problem model, scenario datasets and the configuration shared by the
//! scenario programs.
//!
//! A design problem is a scalar objective `J(θ)` over a box `Θ` together with
//! `n_r` requirement functions `r_k(θ, a, e)`, where `a` is aleatory and `e` is
//! epistemic. The `k`-th requirement is met when `r_k ≤ 0`. Requirement
//! callables must be pure and reentrant: every module evaluates them from
//! several threads without synchronization.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_fraction, Error, Result};
use crate::nlp::{NlpDiagnostics, SolverStatus};

/// Objective callable `J(θ)`.
pub type Objective = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Requirement or response callable `(θ, a, e) ↦ scalar`.
pub type Requirement = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync>;

/// Dense row-major matrix of scenarios, one scenario per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("matrix data", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            check_dim("matrix row", cols, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// New matrix holding the listed rows in the listed order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn without_row(&self, skip: usize) -> Matrix {
        let keep: Vec<usize> = (0..self.rows).filter(|&i| i != skip).collect();
        self.select_rows(&keep)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Axis-aligned box. Infinite limits are allowed for auxiliary decision
/// variables (slacks, levels); design boxes must be finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim("bounds", lower.len(), upper.len())?;
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::Input(format!("bad bounds at coordinate {i}: [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_finite(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn project(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Concatenation of two boxes.
    pub fn extend(&self, other: &Bounds) -> Bounds {
        let mut lower = self.lower.clone();
        let mut upper = self.upper.clone();
        lower.extend_from_slice(&other.lower);
        upper.extend_from_slice(&other.upper);
        Bounds { lower, upper }
    }
}

/// The design problem: objective, requirements, design box and dimensions.
#[derive(Clone)]
pub struct ProblemSpec {
    name: String,
    objective: Objective,
    requirements: Vec<Requirement>,
    bounds: Bounds,
    m_a: usize,
    m_e: usize,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("n_r", &self.n_r())
            .field("m_theta", &self.m_theta())
            .field("m_a", &self.m_a)
            .field("m_e", &self.m_e)
            .finish()
    }
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        objective: Objective,
        requirements: Vec<Requirement>,
        bounds: Bounds,
        m_a: usize,
        m_e: usize,
    ) -> Result<Self> {
        if requirements.is_empty() {
            return Err(Error::Input("at least one requirement is needed".into()));
        }
        if bounds.dim() == 0 || m_a == 0 || m_e == 0 {
            return Err(Error::Input("dimensions must be positive".into()));
        }
        if !bounds.is_finite() {
            return Err(Error::Input("the design box must be bounded".into()));
        }
        Ok(Self {
            name: name.into(),
            objective,
            requirements,
            bounds,
            m_a,
            m_e,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_r(&self) -> usize {
        self.requirements.len()
    }

    pub fn m_theta(&self) -> usize {
        self.bounds.dim()
    }

    pub fn m_a(&self) -> usize {
        self.m_a
    }

    pub fn m_e(&self) -> usize {
        self.m_e
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn objective(&self, theta: &[f64]) -> f64 {
        (self.objective)(theta)
    }

    /// `r_k(θ, a, e)` without dimension checks, for hot loops.
    #[inline]
    pub fn requirement(&self, k: usize, theta: &[f64], a: &[f64], e: &[f64]) -> f64 {
        (self.requirements[k])(theta, a, e)
    }

    pub fn check_point(&self, theta: &[f64], a: &[f64], e: &[f64]) -> Result<()> {
        check_dim("design vector", self.m_theta(), theta.len())?;
        check_dim("aleatory vector", self.m_a, a.len())?;
        check_dim("epistemic vector", self.m_e, e.len())
    }

    /// Worst-case requirement `max_k r_k(θ, a, e)`.
    pub fn r_max(&self, theta: &[f64], a: &[f64], e: &[f64]) -> Result<f64> {
        self.check_point(theta, a, e)?;
        Ok(self.r_max_unchecked(theta, a, e))
    }

    #[inline]
    pub fn r_max_unchecked(&self, theta: &[f64], a: &[f64], e: &[f64]) -> f64 {
        self.requirements
            .iter()
            .map(|r| r(theta, a, e))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Copy of this problem whose only requirement is `r_max`.
    pub fn worst_case(&self) -> ProblemSpec {
        let reqs = self.requirements.clone();
        let rmax: Requirement = Arc::new(move |t, a, e| {
            reqs.iter()
                .map(|r| r(t, a, e))
                .fold(f64::NEG_INFINITY, f64::max)
        });
        ProblemSpec {
            name: format!("{}/worst-case", self.name),
            objective: self.objective.clone(),
            requirements: vec![rmax],
            bounds: self.bounds.clone(),
            m_a: self.m_a,
            m_e: self.m_e,
        }
    }
}

/// Training scenarios and optional testing scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioData {
    pub aleatory: Matrix,
    pub epistemic: Matrix,
    pub testing_aleatory: Option<Matrix>,
    pub testing_epistemic: Option<Matrix>,
}

impl ScenarioData {
    pub fn new(aleatory: Matrix, epistemic: Matrix) -> Result<Self> {
        let data = Self {
            aleatory,
            epistemic,
            testing_aleatory: None,
            testing_epistemic: None,
        };
        data.check_finite()?;
        Ok(data)
    }

    pub fn with_testing(mut self, aleatory: Matrix, epistemic: Matrix) -> Result<Self> {
        check_dim("testing aleatory columns", self.aleatory.cols(), aleatory.cols())?;
        check_dim("testing epistemic columns", self.epistemic.cols(), epistemic.cols())?;
        self.testing_aleatory = Some(aleatory);
        self.testing_epistemic = Some(epistemic);
        self.check_finite()?;
        Ok(self)
    }

    fn check_finite(&self) -> Result<()> {
        let all = [
            Some(&self.aleatory),
            Some(&self.epistemic),
            self.testing_aleatory.as_ref(),
            self.testing_epistemic.as_ref(),
        ];
        if all.iter().flatten().all(|m| m.is_finite()) {
            Ok(())
        } else {
            Err(Error::Input("scenario data contains non-finite values".into()))
        }
    }

    pub fn n_a(&self) -> usize {
        self.aleatory.rows()
    }

    pub fn n_e(&self) -> usize {
        self.epistemic.rows()
    }

    /// Checks the data against a problem's dimensions.
    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        if self.n_a() == 0 || self.n_e() == 0 {
            return Err(Error::Input("training sets must not be empty".into()));
        }
        check_dim("aleatory columns", spec.m_a(), self.aleatory.cols())?;
        check_dim("epistemic columns", spec.m_e(), self.epistemic.cols())?;
        if let Some(t) = &self.testing_aleatory {
            check_dim("testing aleatory columns", spec.m_a(), t.cols())?;
        }
        if let Some(t) = &self.testing_epistemic {
            check_dim("testing epistemic columns", spec.m_e(), t.cols())?;
        }
        Ok(())
    }

    /// Same data with the `i`-th aleatory scenario (and thus its whole row of
    /// constraints) removed.
    pub fn without_aleatory(&self, i: usize) -> ScenarioData {
        ScenarioData {
            aleatory: self.aleatory.without_row(i),
            ..self.clone()
        }
    }

    /// Testing sets, or an input error when they are absent.
    pub fn testing(&self) -> Result<(&Matrix, &Matrix)> {
        match (&self.testing_aleatory, &self.testing_epistemic) {
            (Some(a), Some(e)) => Ok((a, e)),
            _ => Err(Error::Input("testing scenarios are required".into())),
        }
    }
}

/// Requirement values `r_k(θ, a^(i), e^(j))` laid out as `[k][i][j]`.
#[derive(Clone, Debug)]
pub struct RequirementValues {
    n_r: usize,
    n_a: usize,
    n_e: usize,
    values: Vec<f64>,
}

impl RequirementValues {
    pub fn compute(spec: &ProblemSpec, theta: &[f64], aleatory: &Matrix, epistemic: &Matrix) -> Self {
        Self::compute_with(theta, aleatory, epistemic, spec.n_r(), |k, t, a, e| {
            spec.requirement(k, t, a, e)
        })
    }

    /// Same layout for an arbitrary family of functions, e.g. a response.
    pub fn compute_with<F>(theta: &[f64], aleatory: &Matrix, epistemic: &Matrix, n_r: usize, f: F) -> Self
    where
        F: Fn(usize, &[f64], &[f64], &[f64]) -> f64,
    {
        let (n_a, n_e) = (aleatory.rows(), epistemic.rows());
        let mut values = Vec::with_capacity(n_r * n_a * n_e);
        for k in 0..n_r {
            for a in aleatory.iter_rows() {
                for e in epistemic.iter_rows() {
                    values.push(f(k, theta, a, e));
                }
            }
        }
        Self {
            n_r,
            n_a,
            n_e,
            values,
        }
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_e(&self) -> usize {
        self.n_e
    }

    /// The pseudo-distribution sample `{r_k(θ, a^(i), e^(j))}_j`.
    #[inline]
    pub fn row(&self, k: usize, i: usize) -> &[f64] {
        let start = (k * self.n_a + i) * self.n_e;
        &self.values[start..start + self.n_e]
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.values[(k * self.n_a + i) * self.n_e + j]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Norm used to describe an epistemic set `{e : ‖c − e‖ ≤ ν}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "weights", rename_all = "kebab-case")]
pub enum SetNorm {
    /// `max_i |x_i| / w_i`; describes hyper-rectangles.
    WeightedMax(Vec<f64>),
    /// `sqrt(Σ (x_i / w_i)²)`; describes hyper-ellipsoids.
    WeightedEuclidean(Vec<f64>),
}

impl SetNorm {
    pub fn weights(&self) -> &[f64] {
        match self {
            SetNorm::WeightedMax(w) | SetNorm::WeightedEuclidean(w) => w,
        }
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        let scaled = x.iter().zip(self.weights()).map(|(v, w)| {
            if *v == 0.0 {
                0.0
            } else if *w == 0.0 {
                f64::INFINITY
            } else {
                (v / w).abs()
            }
        });
        match self {
            SetNorm::WeightedMax(_) => scaled.fold(0.0, f64::max),
            SetNorm::WeightedEuclidean(_) => scaled.map(|s| s * s).sum::<f64>().sqrt(),
        }
    }
}

/// Epistemic set `E = {e : ‖c − e‖ ≤ ν}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpistemicSet {
    pub center: Vec<f64>,
    pub radius: f64,
    pub norm: SetNorm,
}

impl EpistemicSet {
    pub fn new(center: Vec<f64>, radius: f64, norm: SetNorm) -> Result<Self> {
        check_dim("norm weights", center.len(), norm.weights().len())?;
        if !(radius >= 0.0) || norm.weights().iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Input("radius and norm weights must be nonnegative".into()));
        }
        Ok(Self { center, radius, norm })
    }

    /// The box `[lower, upper]` as a unit ball of a weighted max-norm.
    pub fn hyper_rectangle(lower: &[f64], upper: &[f64]) -> Result<Self> {
        let b = Bounds::new(lower.to_vec(), upper.to_vec())?;
        let center = b.lower.iter().zip(&b.upper).map(|(l, u)| 0.5 * (l + u)).collect();
        let half = b.lower.iter().zip(&b.upper).map(|(l, u)| 0.5 * (u - l)).collect();
        Self::new(center, 1.0, SetNorm::WeightedMax(half))
    }

    /// Ellipsoid with the given semi-axes along the coordinate directions.
    pub fn hyper_ellipsoid(center: Vec<f64>, semi_axes: Vec<f64>) -> Result<Self> {
        Self::new(center, 1.0, SetNorm::WeightedEuclidean(semi_axes))
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `‖c − e‖`.
    pub fn distance(&self, e: &[f64]) -> f64 {
        let diff: Vec<f64> = self.center.iter().zip(e).map(|(c, v)| c - v).collect();
        self.norm.norm(&diff)
    }

    pub fn contains(&self, e: &[f64]) -> bool {
        self.distance(e) <= self.radius
    }

    /// Box representation, available for max-norm sets.
    pub fn as_box(&self) -> Option<Bounds> {
        match &self.norm {
            SetNorm::WeightedMax(w) => {
                let lower = self.center.iter().zip(w).map(|(c, w)| c - self.radius * w).collect();
                let upper = self.center.iter().zip(w).map(|(c, w)| c + self.radius * w).collect();
                Some(Bounds { lower, upper })
            }
            SetNorm::WeightedEuclidean(_) => None,
        }
    }

    /// Tightest box enclosing the set, scaled about the center by `scale`.
    pub fn bounding_box(&self, scale: f64) -> Bounds {
        let w = self.norm.weights();
        let r = self.radius * scale;
        Bounds {
            lower: self.center.iter().zip(w).map(|(c, w)| c - r * w).collect(),
            upper: self.center.iter().zip(w).map(|(c, w)| c + r * w).collect(),
        }
    }

    /// `n` points drawn uniformly from the set.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Matrix {
        let m = self.dim();
        let w = self.norm.weights();
        let mut data = Vec::with_capacity(n * m);
        for _ in 0..n {
            match &self.norm {
                SetNorm::WeightedMax(_) => {
                    for i in 0..m {
                        let u: f64 = rng.random_range(-1.0..=1.0);
                        data.push(self.center[i] + self.radius * w[i] * u);
                    }
                }
                SetNorm::WeightedEuclidean(_) => {
                    let dir: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
                    let len = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                    let u: f64 = rng.random();
                    let r = self.radius * u.powf(1.0 / m as f64);
                    for i in 0..m {
                        data.push(self.center[i] + r * w[i] * dir[i] / len);
                    }
                }
            }
        }
        Matrix {
            rows: n,
            cols: m,
            data,
        }
    }
}

/// Outlier fractions, penalty and weight sharpness shared by the programs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaConfig {
    /// Fraction `α_{a,k}` of aleatory scenarios allowed to violate requirement `k`.
    pub alpha_a: Vec<f64>,
    /// Fraction `α_{e,k}` of epistemic scenarios allowed to violate requirement `k`.
    pub alpha_e: Vec<f64>,
    /// Penalty `ρ` on slack variables.
    pub rho: f64,
    /// Sharpness `κ` of the aleatory weights `exp(−κ ξ_i)`.
    pub kappa: f64,
    /// Sharpness `γ` of the epistemic weights.
    pub gamma: f64,
}

impl AlphaConfig {
    pub const DEFAULT_RHO: f64 = 1e6;
    pub const DEFAULT_KAPPA: f64 = 1000.0;
    pub const DEFAULT_GAMMA: f64 = 100.0;

    /// No outliers, large penalty.
    pub fn zeros(n_r: usize) -> Self {
        Self {
            alpha_a: vec![0.0; n_r],
            alpha_e: vec![0.0; n_r],
            rho: Self::DEFAULT_RHO,
            kappa: Self::DEFAULT_KAPPA,
            gamma: Self::DEFAULT_GAMMA,
        }
    }

    /// The same fractions for every requirement.
    pub fn uniform(n_r: usize, alpha_a: f64, alpha_e: f64) -> Self {
        Self {
            alpha_a: vec![alpha_a; n_r],
            alpha_e: vec![alpha_e; n_r],
            ..Self::zeros(n_r)
        }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn validate(&self, n_r: usize) -> Result<()> {
        check_dim("alpha_a", n_r, self.alpha_a.len())?;
        check_dim("alpha_e", n_r, self.alpha_e.len())?;
        for a in self.alpha_a.iter().chain(&self.alpha_e) {
            check_fraction("outlier fraction", *a)?;
        }
        if !(self.rho >= 0.0) {
            return Err(Error::Input(format!("rho must be nonnegative, got {}", self.rho)));
        }
        if !(self.kappa >= 1.0) || !(self.gamma >= 1.0) {
            return Err(Error::Input("kappa and gamma must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a scenario program.
#[derive(Clone, Debug, Serialize)]
pub struct SolveResult {
    pub formulation: String,
    pub theta_star: Vec<f64>,
    pub xi_star: Option<Vec<f64>>,
    pub lambda_star: Option<f64>,
    /// Decision-valued fractions of the feasibility-seed program.
    pub alpha_a_star: Option<Vec<f64>>,
    /// `J(θ*)` for moment-free programs, `λ*` for moment programs.
    pub objective: f64,
    /// Full program objective, penalty terms included.
    pub program_value: f64,
    pub aleatory_outliers: Vec<usize>,
    /// `𝒪_e(i)` for every aleatory scenario `i`.
    pub epistemic_outliers: Vec<Vec<usize>>,
    /// Scenarios with vanishing weight, for the global-outlier programs.
    pub global_epistemic_outliers: Option<Vec<usize>>,
    pub status: SolverStatus,
    pub restarts_used: usize,
    pub diagnostics: NlpDiagnostics,
}

/// Draws a standard normal vector; shared by the samplers.
pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant_spec(values: &[f64]) -> ProblemSpec {
        let reqs = values
            .iter()
            .map(|&v| Arc::new(move |_: &[f64], _: &[f64], _: &[f64]| v) as Requirement)
            .collect();
        ProblemSpec::new(
            "const",
            Arc::new(|_: &[f64]| 0.0),
            reqs,
            Bounds::new(vec![0.0], vec![1.0]).unwrap(),
            1,
            1,
        )
        .unwrap()
    }

    #[test]
    fn r_max_of_constant_requirements() {
        let spec = constant_spec(&[-1.0, 2.0]);
        assert_eq!(spec.r_max(&[0.5], &[0.0], &[0.0]).unwrap(), 2.0);
        let single = constant_spec(&[-3.0]);
        assert_eq!(single.r_max(&[0.5], &[0.0], &[0.0]).unwrap(), -3.0);
    }

    #[test]
    fn r_max_rejects_bad_dimensions() {
        let spec = constant_spec(&[1.0]);
        assert!(matches!(
            spec.r_max(&[0.5, 0.1], &[0.0], &[0.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(spec.r_max(&[0.5], &[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn r_max_nonpositive_iff_all_requirements_nonpositive() {
        // exhaustive over sign patterns of three requirement values
        let levels = [-2.0, -0.0, 0.0, 1e-12, 3.0];
        for &x in &levels {
            for &y in &levels {
                for &z in &levels {
                    let spec = constant_spec(&[x, y, z]);
                    let r = spec.r_max(&[0.0], &[0.0], &[0.0]).unwrap();
                    assert_eq!(r <= 0.0, x <= 0.0 && y <= 0.0 && z <= 0.0);
                }
            }
        }
    }

    #[test]
    fn membership_is_reflexive_at_the_center() {
        let set = EpistemicSet::hyper_ellipsoid(vec![1.0, 2.0], vec![0.5, 0.0]).unwrap();
        assert!(set.contains(&[1.0, 2.0]));
        assert!(!set.contains(&[1.0, 2.1]));
        let zero = EpistemicSet::new(vec![0.0], 0.0, SetNorm::WeightedMax(vec![1.0])).unwrap();
        assert!(zero.contains(&[0.0]));
    }

    #[test]
    fn rectangle_round_trips_through_max_norm() {
        let set = EpistemicSet::hyper_rectangle(&[0.0, 0.0, 0.0], &[0.2, 2.0 * std::f64::consts::PI, 0.2])
            .unwrap();
        let b = set.as_box().unwrap();
        assert_eq!(b.lower, vec![0.0, 0.0, 0.0]);
        assert_eq!(b.upper, vec![0.2, 2.0 * std::f64::consts::PI, 0.2]);
    }

    proptest! {
        #[test]
        fn box_membership_matches_max_norm(
            l in prop::collection::vec(-5.0f64..5.0, 3),
            w in prop::collection::vec(0.01f64..3.0, 3),
            p in prop::collection::vec(-10.0f64..10.0, 3),
        ) {
            let u: Vec<f64> = l.iter().zip(&w).map(|(l, w)| l + w).collect();
            let set = EpistemicSet::hyper_rectangle(&l, &u).unwrap();
            let in_box = p.iter().zip(l.iter().zip(&u)).all(|(p, (l, u))| p >= l && p <= u);
            // points within a few ulps of a face may go either way
            let margin = p.iter().zip(l.iter().zip(&u))
                .map(|(p, (l, u))| (p - l).abs().min((p - u).abs()))
                .fold(f64::INFINITY, f64::min);
            prop_assume!(margin > 1e-9);
            prop_assert_eq!(set.contains(&p), in_box);
        }

        #[test]
        fn uniform_samples_stay_inside(seed in 0u64..1000) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ell = EpistemicSet::hyper_ellipsoid(vec![0.0, 1.0], vec![2.0, 0.5]).unwrap();
            let pts = ell.sample_uniform(&mut rng, 20);
            for p in pts.iter_rows() {
                prop_assert!(ell.distance(p) <= 1.0 + 1e-12);
            }
        }
    }
}
