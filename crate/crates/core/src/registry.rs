//! Named problem definitions.
//!
//! Requirements are ordinary Rust closures, so problems are compiled in and
//! looked up by name. The circle benchmark is registered by default; an
//! application embedding the library adds its own with
//! [`Registry::register`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::benchmark::{self, GaussianMixture};
use crate::error::{Error, Result};
use crate::seqdesign::{Density, DensityFn};
use crate::types::{Bounds, EpistemicSet, ProblemSpec, Requirement, ScenarioData};

/// Numeric problem parameters by name.
pub type Params = BTreeMap<String, f64>;

/// Scenario counts and seed for synthetic data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenerateSpec {
    pub n_a: usize,
    pub n_e: usize,
    pub n_a_test: usize,
    pub n_e_test: usize,
    pub seed: u64,
}

pub type Generator = Arc<dyn Fn(&GenerateSpec) -> Result<ScenarioData> + Send + Sync>;

/// Everything the commands need about one problem.
#[derive(Clone)]
pub struct Problem {
    pub spec: ProblemSpec,
    /// Response function for the moment programs.
    pub response: Option<Requirement>,
    /// Epistemic set used by the risk bound.
    pub epistemic_set: EpistemicSet,
    pub density: Option<DensityFn>,
    pub generator: Option<Generator>,
}

impl Problem {
    pub fn density(&self) -> Density {
        self.density.clone().map_or(Density::Constant, Density::Function)
    }
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("spec", &self.spec)
            .field("epistemic_set", &self.epistemic_set)
            .field("has_response", &self.response.is_some())
            .field("has_generator", &self.generator.is_some())
            .finish()
    }
}

pub type Factory = Arc<dyn Fn(&Params) -> Result<Problem> + Send + Sync>;

#[derive(Clone)]
pub struct Registry {
    factories: BTreeMap<String, Factory>,
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("circle", Arc::new(circle));
        r
    }
}

impl Registry {
    pub fn register(&mut self, name: &str, factory: Factory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, params: &Params) -> Result<Problem> {
        let f = self.factories.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.names().collect();
            Error::Input(format!("unknown problem '{name}'; known problems: {}", known.join(", ")))
        })?;
        f(params)
    }
}

/// The circle benchmark. Parameters: `c_bound` (half-width of the center
/// box, default 10) and `mu_max` (default 20).
fn circle(params: &Params) -> Result<Problem> {
    if let Some(k) = params.keys().find(|k| !matches!(k.as_str(), "c_bound" | "mu_max")) {
        return Err(Error::Input(format!("unknown circle parameter '{k}'")));
    }
    let c = params.get("c_bound").copied().unwrap_or(10.0);
    let mu = params.get("mu_max").copied().unwrap_or(20.0);
    let spec = benchmark::circle_problem_with_bounds(Bounds::new(vec![-c, -c, 0.0], vec![c, c, mu])?)?;
    let mixture = GaussianMixture::default();
    let m = mixture.clone();
    Ok(Problem {
        spec,
        response: Some(benchmark::circle_response_fn()),
        epistemic_set: benchmark::epistemic_set(),
        density: Some(Arc::new(move |a: &[f64]| m.pdf(a))),
        generator: Some(Arc::new(move |g: &GenerateSpec| {
            if g.n_a_test > 0 && g.n_e_test > 0 {
                benchmark::generate_with_testing(g.n_a, g.n_e, g.n_a_test, g.n_e_test, g.seed, &mixture)
            } else {
                benchmark::generate_dataset(g.n_a, g.n_e, g.seed, &mixture)
            }
        })),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_is_registered() {
        let r = Registry::default();
        assert_eq!(r.names().collect::<Vec<_>>(), vec!["circle"]);
        let p = r.build("circle", &Params::new()).unwrap();
        assert_eq!(p.spec.m_theta(), 3);
        assert_eq!(p.spec.bounds().upper, vec![10.0, 10.0, 20.0]);
        let g = p.generator.as_ref().unwrap();
        let spec = GenerateSpec {
            n_a: 5,
            n_e: 4,
            n_a_test: 7,
            n_e_test: 3,
            seed: 1,
        };
        let d = g(&spec).unwrap();
        assert_eq!((d.n_a(), d.n_e()), (5, 4));
        assert_eq!(d.testing().unwrap().0.rows(), 7);
    }

    #[test]
    fn parameters_are_checked() {
        let r = Registry::default();
        let p = r.build("circle", &Params::from([("mu_max".to_string(), 5.0)])).unwrap();
        assert_eq!(p.spec.bounds().upper[2], 5.0);
        assert!(r.build("circle", &Params::from([("radius".to_string(), 5.0)])).is_err());
        let err = r.build("sphere", &Params::new()).unwrap_err().to_string();
        assert!(err.contains("circle"), "{err}");
    }

    #[test]
    fn custom_problems_can_be_added() {
        let mut r = Registry::default();
        r.register(
            "line",
            Arc::new(|_: &Params| {
                let spec = ProblemSpec::new(
                    "line",
                    Arc::new(|t: &[f64]| t[0]),
                    vec![Arc::new(|t: &[f64], a: &[f64], e: &[f64]| a[0] + e[0] - t[0]) as Requirement],
                    Bounds::new(vec![0.0], vec![10.0])?,
                    1,
                    1,
                )?;
                Ok(Problem {
                    spec,
                    response: None,
                    epistemic_set: EpistemicSet::hyper_rectangle(&[0.0], &[1.0])?,
                    density: None,
                    generator: None,
                })
            }),
        );
        let p = r.build("line", &Params::new()).unwrap();
        assert!(matches!(p.density(), Density::Constant));
        assert_eq!(r.names().count(), 2);
    }
}
