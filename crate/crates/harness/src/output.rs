//! CSV persistence. Each experiment writes `<kind>.csv` plus a `<kind>.csv.meta` JSON sidecar.
//!
//! CSV columns: `experiment, sweep, sweep_value, seed, baseline, metric, value, status,
//! config_hash`. One row per (sweep point, seed, scheme, metric); failed or skipped tasks carry a
//! NaN value and a non-`ok` status.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::experiments::{ExperimentOutput, Row};

pub const COLUMNS: [&str; 9] =
    ["experiment", "sweep", "sweep_value", "seed", "baseline", "metric", "value", "status", "config_hash"];

#[derive(Debug, Serialize)]
struct Meta<'a> {
    experiment: &'a str,
    config_hash: String,
    columns: [&'static str; 9],
    rows: usize,
    seeds: &'a [u64],
    harness_version: &'static str,
    core_version: &'static str,
    conic_version: &'static str,
    config: &'a ExperimentConfig,
}

/// Create the directory if needed and prove it is writable, before any solve starts.
pub fn ensure_writable(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".nfbf-write-probe");
    fs::File::create(&probe)?.write_all(b"")?;
    fs::remove_file(&probe)?;
    Ok(())
}

pub fn csv_bytes(rows: &[Row]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(COLUMNS).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Io(std::io::Error::other(e))
}

/// Write the CSV and its sidecar; returns the CSV path.
pub fn write_output(dir: &Path, cfg: &ExperimentConfig, out: &ExperimentOutput) -> Result<PathBuf, HarnessError> {
    let name = out.kind.name();
    let csv_path = dir.join(format!("{name}.csv"));
    fs::write(&csv_path, csv_bytes(&out.rows)?)?;
    let meta = Meta {
        experiment: name,
        config_hash: cfg.hash(),
        columns: COLUMNS,
        rows: out.rows.len(),
        seeds: &cfg.seeds,
        harness_version: env!("CARGO_PKG_VERSION"),
        core_version: nfbf_core::VERSION,
        conic_version: nfbf_core::CONIC_VERSION,
        config: cfg,
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| HarnessError::Io(e.into()))?;
    fs::write(dir.join(format!("{name}.csv.meta")), json)?;
    Ok(csv_path)
}
