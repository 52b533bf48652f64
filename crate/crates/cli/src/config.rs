//! JSON run configuration.
//!
//! Every section except `problem` and `data` has defaults. Relative data
//! paths are resolved against the directory of the configuration file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use scendo::nlp::NlpOptions;
use scendo::programs::FormulationTag;
use scendo::rmc::RmcConfig;
use scendo::scenario_theory::{ContainmentOptions, ContainmentTest, RiskOptions, TOL_SUPPORT};
use scendo::seqdesign::{BudgetRule, SpecMetric};
use scendo::types::AlphaConfig;

/// A scalar applied to every requirement, or one value per requirement.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum PerRequirement {
    All(f64),
    Each(Vec<f64>),
}

impl PerRequirement {
    pub fn expand(&self, n_r: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            PerRequirement::All(v) => Ok(vec![*v; n_r]),
            PerRequirement::Each(v) if v.len() == n_r => Ok(v.clone()),
            PerRequirement::Each(v) => bail!("{what}: expected {n_r} values, got {}", v.len()),
        }
    }
}

impl Default for PerRequirement {
    fn default() -> Self {
        PerRequirement::All(0.0)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub data: DataSection,
    #[serde(default = "default_formulation")]
    pub formulation: FormulationTag,
    #[serde(default)]
    pub moment: MomentSection,
    #[serde(default)]
    pub alphas: AlphasSection,
    /// Weights of the feasibility-seed objective; unit weights by default.
    #[serde(default)]
    pub omega: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: NlpOptions,
    #[serde(default)]
    pub rmc: RmcSection,
    #[serde(default)]
    pub scenario_theory: TheorySection,
    #[serde(default)]
    pub sd: Option<SdSection>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_formulation() -> FormulationTag {
    FormulationTag::RiskAverseLocal
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub generate: Option<GenerateSection>,
    pub files: Option<FilesSection>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub n_a: usize,
    pub n_e: usize,
    #[serde(default)]
    pub n_a_test: usize,
    #[serde(default)]
    pub n_e_test: usize,
    /// Overrides the run seed for data generation.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilesSection {
    pub aleatory: PathBuf,
    pub epistemic: PathBuf,
    #[serde(default)]
    pub testing_aleatory: Option<PathBuf>,
    #[serde(default)]
    pub testing_epistemic: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentSection {
    #[serde(default)]
    pub alpha_e: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlphasSection {
    pub alpha_a: PerRequirement,
    pub alpha_e: PerRequirement,
    pub rho: f64,
    pub kappa: f64,
    pub gamma: f64,
}

impl Default for AlphasSection {
    fn default() -> Self {
        Self {
            alpha_a: PerRequirement::default(),
            alpha_e: PerRequirement::default(),
            rho: AlphaConfig::DEFAULT_RHO,
            kappa: AlphaConfig::DEFAULT_KAPPA,
            gamma: AlphaConfig::DEFAULT_GAMMA,
        }
    }
}

impl AlphasSection {
    pub fn build(&self, n_r: usize) -> Result<AlphaConfig> {
        let cfg = AlphaConfig {
            alpha_a: self.alpha_a.expand(n_r, "alphas.alpha_a")?,
            alpha_e: self.alpha_e.expand(n_r, "alphas.alpha_e")?,
            rho: self.rho,
            kappa: self.kappa,
            gamma: self.gamma,
        };
        cfg.validate(n_r)?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RmcSection {
    pub alpha_a_prime: PerRequirement,
    pub alpha_e_prime: PerRequirement,
    pub sigma: f64,
    pub p_max: PerRequirement,
    pub total_failure: bool,
}

impl Default for RmcSection {
    fn default() -> Self {
        Self {
            alpha_a_prime: PerRequirement::default(),
            alpha_e_prime: PerRequirement::default(),
            sigma: 0.95,
            p_max: PerRequirement::All(0.01),
            total_failure: false,
        }
    }
}

impl RmcSection {
    pub fn build(&self, n_r: usize) -> Result<RmcConfig> {
        let n = if self.total_failure { 1 } else { n_r };
        Ok(RmcConfig {
            alpha_a_prime: self.alpha_a_prime.expand(n, "rmc.alpha_a_prime")?,
            alpha_e_prime: self.alpha_e_prime.expand(n, "rmc.alpha_e_prime")?,
            sigma: self.sigma,
            p_max: self.p_max.expand(n, "rmc.p_max")?,
            total_failure: self.total_failure,
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheorySection {
    /// Compute the risk bound in `analyze`.
    pub enabled: bool,
    pub beta: f64,
    pub containment: ContainmentTest,
    pub n_probe: usize,
    pub tol_support: f64,
}

impl Default for TheorySection {
    fn default() -> Self {
        Self {
            enabled: true,
            beta: 1e-4,
            containment: ContainmentTest::Auto,
            n_probe: 2000,
            tol_support: TOL_SUPPORT,
        }
    }
}

impl TheorySection {
    pub fn build(&self, seed: u64) -> RiskOptions {
        RiskOptions {
            beta: self.beta,
            tol_support: self.tol_support,
            containment: ContainmentOptions {
                test: self.containment,
                n_probe: self.n_probe,
                seed,
                ..Default::default()
            },
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum DensityChoice {
    /// Every aleatory scenario equally likely.
    #[default]
    Constant,
    /// The density registered with the problem.
    Problem,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdSection {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_metric")]
    pub metric: SpecMetric,
    pub threshold: f64,
    #[serde(default)]
    pub j_bound: Option<f64>,
    /// Training size of the baseline; the training data size by default.
    #[serde(default)]
    pub n_a_initial: Option<usize>,
    #[serde(default = "default_growth")]
    pub n_a_growth: f64,
    #[serde(default = "default_cap")]
    pub n_a_cap: usize,
    /// Training epistemic count; the training data size by default.
    #[serde(default)]
    pub n_e: Option<usize>,
    #[serde(default = "default_lambda")]
    pub lambda_div: f64,
    #[serde(default)]
    pub density: DensityChoice,
    #[serde(default)]
    pub budget: BudgetRule,
    #[serde(default = "default_sd_program")]
    pub program: FormulationTag,
    /// Fixed training epistemic scenarios, e.g. only the nominal point.
    #[serde(default)]
    pub fixed_epistemic: Option<Vec<Vec<f64>>>,
}

fn default_max_iter() -> usize {
    12
}
fn default_metric() -> SpecMetric {
    SpecMetric::RangeA
}
fn default_growth() -> f64 {
    1.3
}
fn default_cap() -> usize {
    100
}
fn default_lambda() -> f64 {
    1.0
}
fn default_sd_program() -> FormulationTag {
    FormulationTag::RiskAgnosticLocal
}

/// A parsed configuration with the raw bytes it came from.
pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub sha256: String,
}

pub fn load(path: &Path) -> Result<Loaded> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let config: RunConfig =
        serde_json::from_slice(&bytes).with_context(|| format!("invalid config {}", path.display()))?;
    match (&config.data.generate, &config.data.files) {
        (Some(_), Some(_)) => bail!("data: give either 'generate' or 'files', not both"),
        (None, None) => bail!("data: one of 'generate' or 'files' is required"),
        _ => {}
    }
    Ok(Loaded {
        config,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}
