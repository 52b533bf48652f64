//! Report envelopes and CSV writers.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use scendo::rmc::RmcReport;
use scendo::seqdesign::SdTrace;
use scendo::types::SolveResult;

/// Identifies the tool and the exact configuration behind a report. Reports
/// carry no timestamps so identical runs produce identical files.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: Option<String>,
}

impl Provenance {
    pub fn new(config_sha256: Option<String>) -> Self {
        Self {
            tool: "scendo",
            version: env!("CARGO_PKG_VERSION"),
            config_sha256,
        }
    }
}

#[derive(Serialize)]
pub struct SolutionReport<'a> {
    pub provenance: &'a Provenance,
    #[serde(flatten)]
    pub result: &'a SolveResult,
    /// Training data drawn IID, so the risk bound applies.
    pub iid_training: bool,
    /// Outlier fractions from the feasibility seed when the program failed.
    pub suggested_alpha_a: Option<Vec<f64>>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    use std::io::Write;
    writeln!(w)?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))
}

/// One row per aleatory outlier and per epistemic outlier of each scenario.
pub fn write_outliers(path: &Path, result: &SolveResult) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["kind", "aleatory_index", "epistemic_index"])?;
    for i in &result.aleatory_outliers {
        w.write_record(["aleatory", &i.to_string(), ""])?;
    }
    for (i, js) in result.epistemic_outliers.iter().enumerate() {
        for j in js {
            w.write_record(["epistemic", &i.to_string(), &j.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_rmc_csv(path: &Path, report: &RmcReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["requirement", "a_lo", "a_hi", "b_lo", "b_hi", "c", "d_lo", "d_hi"])?;
    for (k, r) in report.requirements.iter().enumerate() {
        let row = [r.range_a.lo, r.range_a.hi, r.range_b.lo, r.range_b.hi, r.point_c, r.range_d.lo, r.range_d.hi];
        let mut rec = vec![k.to_string()];
        rec.extend(row.iter().map(|v| format!("{v:e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sd_trace(path: &Path, trace: &SdTrace) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["iteration", "n_a", "alpha_a", "J", "metric", "n_violated"])?;
    for r in &trace.records {
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        w.write_record([
            r.iteration.to_string(),
            r.n_a.to_string(),
            format!("{:e}", max(&r.alpha_a)),
            format!("{:e}", r.objective),
            format!("{:e}", max(&r.metric)),
            r.violated.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
