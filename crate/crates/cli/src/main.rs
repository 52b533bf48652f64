//! `scendo`: scenario-based design, analysis and sequential refinement.
//!
//! Exit codes: 0 success, 1 unexpected failure, 2 invalid input or
//! configuration, 3 infeasible program or solver failure, 4 sequential
//! design finished without meeting the specification.

mod commands;
mod config;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Common;

#[derive(Parser)]
#[command(name = "scendo", version, about = "Scenario-based design under aleatory and epistemic uncertainty")]
struct Cli {
    /// Worker threads; all cores by default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the run seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` of the configuration.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl RunArgs {
    fn common(&self) -> Common {
        Common {
            config: self.config.clone(),
            seed: self.seed,
            output: self.output.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured program on the training data.
    Solve(RunArgs),
    /// Reliability analysis and risk bound of a design.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Design file (design.json or solution.json); solved when omitted.
        #[arg(long)]
        design: Option<PathBuf>,
    },
    /// Sequential refinement of the training data against the testing data.
    Sequential {
        #[command(flatten)]
        run: RunArgs,
        /// Baseline design; solved from the configuration when omitted.
        #[arg(long)]
        design: Option<PathBuf>,
    },
    /// Write the configured synthetic data sets as CSV.
    GenData(RunArgs),
    /// Risk level certified by `k` support scenarios out of `n`.
    Epsilon {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1e-4)]
        beta: f64,
    },
}

/// An error with a dedicated exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn new(code: u8, message: String) -> Self {
        Self { code, message }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return f.code;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<scendo::Error>() {
            return match e {
                scendo::Error::Solver(_) => 3,
                scendo::Error::Numerical(_) | scendo::Error::Internal(_) => 1,
                _ => 2,
            };
        }
        if cause.is::<serde_json::Error>() || cause.is::<std::io::Error>() {
            return 2;
        }
    }
    // plain messages come from configuration checks
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Solve(a) => commands::solve(&a.common()),
        Command::Analyze { run, design } => commands::analyze(&run.common(), design.as_deref()),
        Command::Sequential { run, design } => commands::sequential(&run.common(), design.as_deref()),
        Command::GenData(a) => commands::gen_data(&a.common()),
        Command::Epsilon { n, k, beta } => commands::epsilon(n, k, beta),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SCENDO_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
