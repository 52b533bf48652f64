//! The data-enclosing circle: find the smallest circle that encloses
//! two-dimensional data when its center and radius are perturbed by
//! epistemic parameters.
//!
//! The design is `θ = (c₁, c₂, μ)`, the epistemic parameter is
//! `e = (e₁, e₂, e₃) ∈ [0, 1/5] × [0, 2π] × [0, 1/5]`, and with
//! `u = (cos e₂, sin e₂)` the perturbed circle has center `c + μe₁u` and
//! radius `μ(1 + μe₁e₃ cᵀu)`.
//!
//! The aleatory distribution of the original study is not available; the
//! generator here draws from a fixed two-component Gaussian mixture, so
//! numbers obtained with it are comparable to published ones only in regime.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    standard_normal, Bounds, EpistemicSet, Matrix, ProblemSpec, Requirement, ScenarioData,
};

/// Perturbed center and radius.
#[inline]
fn perturbed(theta: &[f64], e: &[f64]) -> ([f64; 2], f64) {
    let (c, mu) = ([theta[0], theta[1]], theta[2]);
    let (s, co) = e[1].sin_cos();
    let ct = [c[0] + mu * e[0] * co, c[1] + mu * e[0] * s];
    let mt = mu * (1.0 + mu * e[0] * e[2] * (c[0] * co + c[1] * s));
    (ct, mt)
}

/// `‖c̃ − a‖² − μ̃²`; nonpositive when the perturbed circle encloses `a`.
pub fn circle_requirement(theta: &[f64], a: &[f64], e: &[f64]) -> f64 {
    let (ct, mt) = perturbed(theta, e);
    (ct[0] - a[0]).powi(2) + (ct[1] - a[1]).powi(2) - mt * mt
}

/// `μ̃² + ‖a − c̃‖`, a measure of how tightly the circle encloses `a`.
pub fn circle_response(theta: &[f64], a: &[f64], e: &[f64]) -> f64 {
    let (ct, mt) = perturbed(theta, e);
    mt * mt + ((ct[0] - a[0]).powi(2) + (ct[1] - a[1]).powi(2)).sqrt()
}

/// Circle area `πμ²`.
pub fn circle_objective(theta: &[f64]) -> f64 {
    PI * theta[2] * theta[2]
}

/// Default design box: `c ∈ [−10, 10]²`, `μ ∈ [0, 20]`.
pub fn default_bounds() -> Bounds {
    Bounds {
        lower: vec![-10.0, -10.0, 0.0],
        upper: vec![10.0, 10.0, 20.0],
    }
}

pub fn circle_problem() -> ProblemSpec {
    circle_problem_with_bounds(default_bounds()).expect("default bounds are valid")
}

pub fn circle_problem_with_bounds(bounds: Bounds) -> Result<ProblemSpec> {
    if bounds.dim() != 3 || bounds.lower[2] < 0.0 {
        return Err(Error::Input("circle design box must be 3-D with a nonnegative radius".into()));
    }
    ProblemSpec::new(
        "circle",
        Arc::new(circle_objective),
        vec![Arc::new(circle_requirement) as Requirement],
        bounds,
        2,
        3,
    )
}

pub fn circle_response_fn() -> Requirement {
    Arc::new(circle_response)
}

/// `E = [0, 1/5] × [0, 2π] × [0, 1/5]`.
pub fn epistemic_set() -> EpistemicSet {
    EpistemicSet::hyper_rectangle(&[0.0, 0.0, 0.0], &[0.2, 2.0 * PI, 0.2]).expect("valid box")
}

/// Isotropic Gaussian mixture in the plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 2]>,
    /// Per-component variance `σ²` of the covariance `σ² I`.
    pub variances: Vec<f64>,
}

impl Default for GaussianMixture {
    /// Weights 0.8/0.2, means (0, 0)/(2.5, 1.5), covariances I/0.3·I.
    fn default() -> Self {
        Self {
            weights: vec![0.8, 0.2],
            means: vec![[0.0, 0.0], [2.5, 1.5]],
            variances: vec![1.0, 0.3],
        }
    }
}

impl GaussianMixture {
    pub fn validate(&self) -> Result<()> {
        let n = self.weights.len();
        if n == 0 || self.means.len() != n || self.variances.len() != n {
            return Err(Error::Input("mixture components have inconsistent lengths".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) || self.variances.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Input("mixture weights and variances must be positive".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn pdf(&self, a: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, m), v)| {
                let d2 = (a[0] - m[0]).powi(2) + (a[1] - m[1]).powi(2);
                w * (-0.5 * d2 / v).exp() / (2.0 * PI * v)
            })
            .sum()
    }

    pub fn mean(&self) -> [f64; 2] {
        let mut m = [0.0; 2];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            m[0] += w * mu[0];
            m[1] += w * mu[1];
        }
        m
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Matrix {
        let mut data = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut comp = self.weights.len() - 1;
            for (i, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    comp = i;
                    break;
                }
            }
            let z = standard_normal(rng, 2);
            let s = self.variances[comp].sqrt();
            data.push(self.means[comp][0] + s * z[0]);
            data.push(self.means[comp][1] + s * z[1]);
        }
        Matrix::new(n, 2, data).expect("consistent shape")
    }
}

/// Training data for the circle problem: mixture draws and uniform draws on
/// `E`, reproducible from `seed`.
pub fn generate_dataset(n_a: usize, n_e: usize, seed: u64, mixture: &GaussianMixture) -> Result<ScenarioData> {
    mixture.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let aleatory = mixture.sample(&mut rng, n_a);
    let epistemic = epistemic_set().sample_uniform(&mut rng, n_e);
    ScenarioData::new(aleatory, epistemic)
}

/// Training and testing data drawn from independent streams of one seed.
pub fn generate_with_testing(
    n_a: usize,
    n_e: usize,
    n_a_test: usize,
    n_e_test: usize,
    seed: u64,
    mixture: &GaussianMixture,
) -> Result<ScenarioData> {
    let data = generate_dataset(n_a, n_e, seed, mixture)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let ta = mixture.sample(&mut rng, n_a_test);
    let te = epistemic_set().sample_uniform(&mut rng, n_e_test);
    data.with_testing(ta, te)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nominal_requirement() {
        assert_eq!(circle_requirement(&[0.0, 0.0, 1.0], &[2.0, 0.0], &[0.0, 0.0, 0.0]), 3.0);
        let r = circle_requirement(&[0.4, -1.0, 2.0], &[1.0, 1.0], &[0.0, 1.3, 0.0]);
        assert!((r - (0.36 + 4.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn perturbed_requirement_and_response() {
        let theta = [1.0, 0.0, 1.0];
        let e = [0.2, 0.0, 0.2];
        let r = circle_requirement(&theta, &[0.0, 0.0], &e);
        assert!((r - 0.3584).abs() < 1e-12, "{r}");
        let h = circle_response(&theta, &[0.0, 0.0], &e);
        assert!((h - 2.2816).abs() < 1e-12, "{h}");
        assert_eq!(circle_response(&[0.5, 0.5, 1.5], &[0.5, 0.5], &[0.0, 2.0, 0.0]), 2.25);
    }

    #[test]
    fn objective_is_area() {
        assert_eq!(circle_objective(&[3.0, 1.0, 2.0]), 4.0 * PI);
    }

    #[test]
    fn dataset_is_reproducible_and_epistemic_points_lie_in_e() {
        let m = GaussianMixture::default();
        let a = generate_dataset(40, 60, 11, &m).unwrap();
        let b = generate_dataset(40, 60, 11, &m).unwrap();
        assert_eq!(a, b);
        let set = epistemic_set();
        for e in a.epistemic.iter_rows() {
            assert!(set.contains(e));
            assert!((0.0..=0.2).contains(&e[0]) && (0.0..=2.0 * PI).contains(&e[1]));
        }
        let c = generate_dataset(40, 60, 12, &m).unwrap();
        assert_ne!(a.aleatory, c.aleatory);
    }

    #[test]
    fn mixture_sample_mean() {
        let m = GaussianMixture::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let pts = m.sample(&mut rng, n);
        let expect = m.mean();
        for d in 0..2 {
            let mean: f64 = pts.iter_rows().map(|p| p[d]).sum::<f64>() / n as f64;
            let var: f64 = pts.iter_rows().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n as f64;
            assert!((mean - expect[d]).abs() < 3.0 * (var / n as f64).sqrt(), "dim {d}: {mean}");
        }
    }

    #[test]
    fn mixture_density_integrates_to_one() {
        let m = GaussianMixture::default();
        let h = 0.05;
        let mut total = 0.0;
        for i in -200..=200 {
            for j in -200..=200 {
                total += m.pdf(&[i as f64 * h, j as f64 * h]) * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn testing_sets_are_attached() {
        let d = generate_with_testing(10, 5, 30, 7, 1, &GaussianMixture::default()).unwrap();
        let (ta, te) = d.testing().unwrap();
        assert_eq!((ta.rows(), te.rows()), (30, 7));
        assert_ne!(ta.row(0), d.aleatory.row(0));
    }

    proptest! {
        #[test]
        fn response_nonnegative(
            c in prop::collection::vec(-5.0f64..5.0, 2),
            mu in 0.0f64..5.0,
            a in prop::collection::vec(-5.0f64..5.0, 2),
            e0 in 0.0f64..0.2, e1 in 0.0f64..(2.0 * PI), e2 in 0.0f64..0.2,
        ) {
            let h = circle_response(&[c[0], c[1], mu], &a, &[e0, e1, e2]);
            prop_assert!(h >= 0.0);
        }

        /// Failing for one member of E implies failing for E.
        #[test]
        fn robust_success_implies_pointwise_success(
            c in prop::collection::vec(-2.0f64..2.0, 2),
            mu in 0.5f64..4.0,
            a in prop::collection::vec(-4.0f64..4.0, 2),
        ) {
            let theta = [c[0], c[1], mu];
            let grid: Vec<[f64; 3]> = (0..5).flat_map(|i| (0..8).flat_map(move |j| (0..5).map(move |k| {
                [0.05 * i as f64, PI * j as f64 / 4.0, 0.05 * k as f64]
            }))).collect();
            let robust = grid.iter().all(|e| circle_requirement(&theta, &a, e) <= 0.0);
            if robust {
                for e in &grid {
                    prop_assert!(circle_requirement(&theta, &a, e) <= 0.0);
                }
            }
            let nominal_fail = circle_requirement(&theta, &a, &[0.0, 0.0, 0.0]) > 0.0;
            if nominal_fail {
                prop_assert!(!robust);
            }
        }
    }
}
