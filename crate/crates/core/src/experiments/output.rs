use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{CheckOutcome, ExperimentConfig, ExperimentRecord, RateContext, SlopeFit};
use crate::error::{Error, Result};
use crate::format_f64;

pub const CSV_HEADER: [&str; 11] = [
    "estimator",
    "norm",
    "N",
    "trials",
    "mean_error",
    "stderr",
    "r2",
    "r_max",
    "r_max_stderr",
    "theory_rate",
    "ratio",
];

pub const CSV_FILE: &str = "records.csv";
pub const JSON_FILE: &str = "summary.json";

/// Contents of the JSON sidecar.
#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub version: &'static str,
    pub config: &'a ExperimentConfig,
    pub rate_context: &'a RateContext,
    pub records: &'a [ExperimentRecord],
    pub fits: &'a [SlopeFit],
    pub checks: &'a [CheckOutcome],
}

fn opt(x: Option<f64>) -> String {
    x.map(format_f64).unwrap_or_default()
}

/// Writes the records as CSV with the fixed header.
pub fn write_csv<W: Write>(records: &[ExperimentRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.estimator.as_str().to_string(),
            r.norm.as_str().to_string(),
            r.n.to_string(),
            r.trials.to_string(),
            format_f64(r.mean_error),
            format_f64(r.stderr),
            format_f64(r.r2),
            format_f64(r.r_max),
            format_f64(r.r_max_stderr),
            opt(r.theory_rate),
            opt(r.ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `records.csv` and `summary.json` into `dir`, creating it if needed.
pub fn emit(summary: &Summary<'_>, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv_bytes = Vec::new();
    write_csv(summary.records, &mut csv_bytes).map_err(|e| Error::Parse(e.to_string()))?;
    let csv_path = dir.join(CSV_FILE);
    write_file(&csv_path, &csv_bytes)?;
    let mut json = serde_json::to_string_pretty(summary).map_err(|e| Error::Parse(e.to_string()))?;
    json.push('\n');
    let json_path = dir.join(JSON_FILE);
    write_file(&json_path, json.as_bytes())?;
    Ok((csv_path, json_path))
}
