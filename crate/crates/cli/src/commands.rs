//! Implementation of the subcommands.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::Value;

use scendo::io::{read_matrix, write_matrix};
use scendo::nlp::SolverStatus;
use scendo::programs::{self, Formulation, MomentKind, MomentSpec, OutlierScope, SolveOptions};
use scendo::registry::{GenerateSpec, Problem, Registry};
use scendo::rmc::{self, RmcReport};
use scendo::scenario_theory::{epsilon_bar, risk_bound_at, RiskBoundReport};
use scendo::seqdesign::{run_sd, SdConfig, SdOutcome};
use scendo::types::{AlphaConfig, Matrix, ScenarioData, SolveResult};

use crate::config::{self, DensityChoice, Loaded, RunConfig};
use crate::report::{self, Provenance, SolutionReport};
use crate::Failure;

/// Options shared by the commands that read a configuration.
pub struct Common {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

/// A loaded configuration with everything derived from it.
struct Run {
    cfg: RunConfig,
    base_dir: PathBuf,
    provenance: Provenance,
    problem: Problem,
    seed: u64,
    out_dir: PathBuf,
}

impl Run {
    fn load(common: &Common) -> Result<Self> {
        let Loaded { config, base_dir, sha256 } = config::load(&common.config)?;
        let problem = Registry::default().build(&config.problem.name, &config.problem.params)?;
        let seed = common.seed.unwrap_or(config.seed);
        let out_dir = common
            .output
            .clone()
            .or_else(|| config.output_dir.as_ref().map(|d| base_dir.join(d)))
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
        Ok(Self {
            cfg: config,
            base_dir,
            provenance: Provenance::new(Some(sha256)),
            problem,
            seed,
            out_dir,
        })
    }

    fn n_r(&self) -> usize {
        self.problem.spec.n_r()
    }

    fn data(&self) -> Result<ScenarioData> {
        let spec = &self.problem.spec;
        let data = if let Some(g) = &self.cfg.data.generate {
            let generator = self
                .problem
                .generator
                .as_ref()
                .ok_or_else(|| anyhow!("problem '{}' cannot generate data; use data.files", self.cfg.problem.name))?;
            generator(&GenerateSpec {
                n_a: g.n_a,
                n_e: g.n_e,
                n_a_test: g.n_a_test,
                n_e_test: g.n_e_test,
                seed: g.seed.unwrap_or(self.seed),
            })?
        } else {
            let f = self.cfg.data.files.as_ref().expect("checked on load");
            let read = |p: &Path, cols| read_matrix(&self.base_dir.join(p), Some(cols));
            let data = ScenarioData::new(read(&f.aleatory, spec.m_a())?, read(&f.epistemic, spec.m_e())?)?;
            match (&f.testing_aleatory, &f.testing_epistemic) {
                (Some(a), Some(e)) => data.with_testing(read(a, spec.m_a())?, read(e, spec.m_e())?)?,
                (None, None) => data,
                _ => bail!("data.files: give both testing_aleatory and testing_epistemic, or neither"),
            }
        };
        data.validate(spec)?;
        Ok(data)
    }

    fn alphas(&self) -> Result<AlphaConfig> {
        self.cfg.alphas.build(self.n_r())
    }

    fn formulation(&self) -> Result<Formulation> {
        let tag = self.cfg.formulation;
        let moment = if tag.is_moment() {
            let response = self
                .problem
                .response
                .clone()
                .ok_or_else(|| anyhow!("problem '{}' has no response function for {tag}", self.cfg.problem.name))?;
            Some(MomentSpec {
                response,
                kind: MomentKind::Mean,
                alpha_e: self.cfg.moment.alpha_e,
            })
        } else {
            None
        };
        Ok(Formulation::new(tag, moment)?)
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            nlp: self.cfg.solver.clone(),
            theta_starts: Vec::new(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Solves the configured program. An infeasible or failed solve is followed
/// by the feasibility seed, whose fractions are suggested for `alpha_a`.
fn solve_config(run: &Run, data: &ScenarioData) -> Result<(SolveResult, Option<Vec<f64>>)> {
    let alphas = run.alphas()?;
    let opts = run.solve_options();
    let result = programs::solve(&run.formulation()?, &run.problem.spec, data, &alphas, &opts)?;
    if matches!(result.status, SolverStatus::Infeasible | SolverStatus::Failed) {
        let omega = run.cfg.omega.clone().unwrap_or_else(|| vec![1.0; run.n_r()]);
        let seed = programs::solve_feasibility_seed(&run.problem.spec, data, &alphas, &omega, OutlierScope::Local, &opts)?;
        return Ok((result, seed.alpha_a_star));
    }
    Ok((result, None))
}

pub fn solve(common: &Common) -> Result<()> {
    let run = Run::load(common)?;
    let data = run.data()?;
    let (result, suggested) = solve_config(&run, &data)?;
    report::write_json(
        &run.path("solution.json"),
        &SolutionReport {
            provenance: &run.provenance,
            result: &result,
            iid_training: true,
            suggested_alpha_a: suggested.clone(),
        },
    )?;
    report::write_outliers(&run.path("outliers.csv"), &result)?;
    if let Some(alpha) = suggested {
        return Err(Failure::new(
            3,
            format!("{} ended with status {:?}; suggested alpha_a = {alpha:?}", result.formulation, result.status),
        )
        .into());
    }
    log::info!("J = {:.6}, theta = {:?}", result.objective, result.theta_star);
    Ok(())
}

/// A design read from disk and whether its training data were IID.
struct Design {
    theta: Vec<f64>,
    iid_training: bool,
}

/// Reads `design.json`, `solution.json` or a bare JSON array.
fn read_design(path: &Path, m_theta: usize) -> Result<Design> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read design {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("invalid design {}", path.display()))?;
    let (theta, iid) = match &value {
        Value::Array(_) => (&value, true),
        Value::Object(map) => {
            let theta = map
                .get("theta")
                .or_else(|| map.get("theta_star"))
                .ok_or_else(|| anyhow!("design {}: missing field 'theta'", path.display()))?;
            (theta, map.get("iid_training").and_then(Value::as_bool).unwrap_or(true))
        }
        _ => bail!("design {}: expected an object or an array", path.display()),
    };
    let theta: Vec<f64> =
        serde_json::from_value(theta.clone()).with_context(|| format!("design {}: theta must be numbers", path.display()))?;
    if theta.len() != m_theta {
        bail!("design {}: expected {m_theta} values, got {}", path.display(), theta.len());
    }
    Ok(Design {
        theta,
        iid_training: iid,
    })
}

fn design_or_solve(run: &Run, data: &ScenarioData, design: Option<&Path>) -> Result<Design> {
    match design {
        Some(p) => read_design(p, run.problem.spec.m_theta()),
        None => {
            let (result, suggested) = solve_config(run, data)?;
            if let Some(alpha) = suggested {
                return Err(Failure::new(3, format!("no design: the program is infeasible; suggested alpha_a = {alpha:?}")).into());
            }
            Ok(Design {
                theta: result.theta_star,
                iid_training: true,
            })
        }
    }
}

#[derive(Serialize)]
struct RmcEnvelope<'a> {
    provenance: &'a Provenance,
    theta: &'a [f64],
    #[serde(flatten)]
    report: &'a RmcReport,
}

#[derive(Serialize)]
struct RiskEnvelope<'a> {
    provenance: &'a Provenance,
    theta: &'a [f64],
    /// "valid", or "not-valid-non-iid" when the training data were selected.
    validity: &'static str,
    #[serde(flatten)]
    report: Option<&'a RiskBoundReport>,
}

pub fn analyze(common: &Common, design: Option<&Path>) -> Result<()> {
    let run = Run::load(common)?;
    let data = run.data()?;
    if data.testing_aleatory.is_none() {
        bail!("analyze needs testing data: set data.generate.n_a_test and n_e_test, or the testing files");
    }
    let design = design_or_solve(&run, &data, design)?;
    let rmc_cfg = run.cfg.rmc.build(run.n_r())?;
    let report = rmc::analyze(&run.problem.spec, &design.theta, &data, &rmc_cfg)?;
    report::write_rmc_csv(&run.path("rmc_report.csv"), &report)?;
    report::write_json(
        &run.path("rmc_report.json"),
        &RmcEnvelope {
            provenance: &run.provenance,
            theta: &design.theta,
            report: &report,
        },
    )?;

    if run.cfg.scenario_theory.enabled {
        let bound = if design.iid_training {
            let opts = run.cfg.scenario_theory.build(run.seed);
            Some(risk_bound_at(
                &run.formulation()?,
                &run.problem.spec,
                &data,
                &run.alphas()?,
                &design.theta,
                &run.problem.epistemic_set,
                &run.solve_options(),
                &opts,
            )?)
        } else {
            log::warn!("training data were not drawn IID; the risk bound does not apply");
            None
        };
        report::write_json(
            &run.path("risk_bound.json"),
            &RiskEnvelope {
                provenance: &run.provenance,
                theta: &design.theta,
                validity: if bound.is_some() { "valid" } else { "not-valid-non-iid" },
                report: bound.as_ref(),
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct DesignFile<'a> {
    provenance: &'a Provenance,
    theta: &'a [f64],
    iid_training: bool,
}

#[derive(Serialize)]
struct SdEnvelope<'a> {
    provenance: &'a Provenance,
    baseline: &'a [f64],
    #[serde(flatten)]
    outcome: &'a SdOutcome,
}

fn sd_config(run: &Run, data: &ScenarioData) -> Result<SdConfig> {
    let sd = run.cfg.sd.as_ref().ok_or_else(|| anyhow!("sequential needs an 'sd' section in the config"))?;
    let n_r = run.n_r();
    let mut cfg = SdConfig::new(n_r, sd.metric, sd.threshold);
    cfg.max_iter = sd.max_iter;
    cfg.j_bound = sd.j_bound.unwrap_or(f64::INFINITY);
    cfg.n_a_initial = sd.n_a_initial.unwrap_or(data.n_a());
    cfg.n_a_growth = sd.n_a_growth;
    cfg.n_a_cap = sd.n_a_cap;
    cfg.n_e = sd.n_e.unwrap_or(data.n_e());
    cfg.fixed_epistemic = sd.fixed_epistemic.as_deref().map(Matrix::from_rows).transpose()?;
    cfg.lambda_div = sd.lambda_div;
    cfg.density = match sd.density {
        DensityChoice::Constant => scendo::seqdesign::Density::Constant,
        DensityChoice::Problem => run.problem.density(),
    };
    cfg.budget = sd.budget.clone();
    cfg.program = sd.program;
    cfg.alphas = run.alphas()?;
    cfg.rmc = run.cfg.rmc.build(n_r)?;
    cfg.solve = run.solve_options();
    cfg.validate(&run.problem.spec)?;
    Ok(cfg)
}

pub fn sequential(common: &Common, design: Option<&Path>) -> Result<()> {
    let run = Run::load(common)?;
    let data = run.data()?;
    let (ta, te) = match (&data.testing_aleatory, &data.testing_epistemic) {
        (Some(a), Some(e)) => (a, e),
        _ => bail!("sequential needs testing data: set data.generate.n_a_test and n_e_test, or the testing files"),
    };
    let cfg = sd_config(&run, &data)?;
    let baseline = design_or_solve(&run, &data, design)?.theta;
    let outcome = run_sd(&run.problem.spec, ta, te, &baseline, &cfg)?;

    report::write_sd_trace(&run.path("sd_trace.csv"), &outcome.trace)?;
    report::write_json(
        &run.path("design.json"),
        &DesignFile {
            provenance: &run.provenance,
            theta: &outcome.theta,
            iid_training: false,
        },
    )?;
    report::write_json(
        &run.path("sd_report.json"),
        &SdEnvelope {
            provenance: &run.provenance,
            baseline: &baseline,
            outcome: &outcome,
        },
    )?;
    if let Some(msg) = &outcome.trace.failure {
        return Err(Failure::new(3, format!("sequential design stopped: {msg}")).into());
    }
    if !outcome.converged {
        let n = outcome.trace.records.len();
        return Err(Failure::new(4, format!("specification not met after {n} iterations")).into());
    }
    Ok(())
}

pub fn gen_data(common: &Common) -> Result<()> {
    let run = Run::load(common)?;
    if run.cfg.data.generate.is_none() {
        bail!("gen-data needs data.generate in the config");
    }
    let data = run.data()?;
    write_matrix(&run.path("aleatory.csv"), &data.aleatory, "a")?;
    write_matrix(&run.path("epistemic.csv"), &data.epistemic, "e")?;
    if let (Some(a), Some(e)) = (&data.testing_aleatory, &data.testing_epistemic) {
        write_matrix(&run.path("testing_aleatory.csv"), a, "a")?;
        write_matrix(&run.path("testing_epistemic.csv"), e, "e")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EpsilonReport {
    provenance: Provenance,
    n: usize,
    k: usize,
    beta: f64,
    epsilon_bar: f64,
}

pub fn epsilon(n: usize, k: usize, beta: f64) -> Result<()> {
    let report = EpsilonReport {
        provenance: Provenance::new(None),
        n,
        k,
        beta,
        epsilon_bar: epsilon_bar(n, k, beta)?,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
