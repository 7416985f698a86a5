//! CSV outputs.
//!
//! Tidy tables, one row per record:
//!
//! | file | row | columns |
//! |------|-----|---------|
//! | `trials.csv` | (point, trial, method) | [`TrialRow`] fields |
//! | `targets.csv` | (point, trial, method, target) | [`TargetRow`] fields |
//! | `runtime.csv` | (point, trial, stage) | wall-clock seconds; not reproducible |
//!
//! Aggregates, one row per (point, method), quartiles as `_q1`, `_median`,
//! `_q3` suffixes:
//!
//! | file | content |
//! |------|---------|
//! | `to_error.csv` | relative and absolute TO error, m |
//! | `resolution.csv` | probability of resolution per separation |
//! | `delay_error.csv` | relative and absolute per-target delay error, m |
//! | `cgs.csv` | γ_β and γ_β^ideal, dB |
//!
//! Failed estimates appear as `inf` (errors) or `-inf` (γ_β); cells that do
//! not apply are empty.

use super::stats::{aggregate, AggregateRow, Quartiles};
use super::{MetricTable, TargetRow, TimingRow, TrialRow};
use crate::{Error, Result};
use serde::de::DeserializeOwned;
use std::path::{Path, PathBuf};

const TRIAL_HEADER: &[&str] = &[
    "point",
    "trial",
    "method",
    "snr_db",
    "dyn_proportion",
    "tau_sep_m",
    "targets",
    "detected",
    "rel_to_err_m",
    "abs_to_err_m",
    "residual_err_m",
    "resolved",
    "condition",
    "flags",
];
const TARGET_HEADER: &[&str] = &[
    "point",
    "trial",
    "method",
    "target",
    "true_delay_s",
    "true_aoa_rad",
    "est_delay_s",
    "est_aoa_rad",
    "rel_delay_err_m",
    "abs_delay_err_m",
    "gamma_beta_db",
    "gamma_ideal_db",
];
const TIMING_HEADER: &[&str] = &["point", "trial", "stage", "runtime_s"];

/// Paths written by [`emit_outputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub trials: PathBuf,
    pub targets: PathBuf,
    pub runtime: PathBuf,
    pub to_error: PathBuf,
    pub resolution: PathBuf,
    pub delay_error: PathBuf,
    pub cgs: PathBuf,
}

impl OutputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            trials: dir.join("trials.csv"),
            targets: dir.join("targets.csv"),
            runtime: dir.join("runtime.csv"),
            to_error: dir.join("to_error.csv"),
            resolution: dir.join("resolution.csv"),
            delay_error: dir.join("delay_error.csv"),
            cgs: dir.join("cgs.csv"),
        }
    }
}

fn csv_err(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_rows<R: serde::Serialize>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn quartile_cells(q: &Quartiles) -> [String; 3] {
    [cell(q.q1), cell(q.median), cell(q.q3)]
}

fn write_aggregate(path: &Path, metrics: &[&str], rows: &[AggregateRow], pick: impl Fn(&AggregateRow) -> Vec<String>) -> Result<()> {
    let mut header = vec!["point", "method", "snr_db", "dyn_proportion", "tau_sep_m", "trials", "failures"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend(metrics.iter().map(|m| m.to_string()));
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        let mut rec = vec![
            r.point.to_string(),
            r.method.label().to_string(),
            r.snr_db.to_string(),
            r.dyn_proportion.to_string(),
            cell(r.tau_sep_m),
            r.trials.to_string(),
            r.failures.to_string(),
        ];
        rec.extend(pick(r));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn quartile_names(stem: &str) -> [String; 3] {
    [format!("{stem}_q1"), format!("{stem}_median"), format!("{stem}_q3")]
}

/// Writes the tidy tables and the aggregates into `dir` (created if
/// missing). Re-emitting the same table rewrites identical files.
pub fn emit_outputs(table: &MetricTable, dir: &Path) -> Result<OutputPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = OutputPaths::in_dir(dir);
    write_rows(&paths.trials, TRIAL_HEADER, &table.trials)?;
    write_rows(&paths.targets, TARGET_HEADER, &table.targets)?;
    write_rows(&paths.runtime, TIMING_HEADER, &table.timings)?;

    let agg = aggregate(table);
    let names = |stems: &[&str]| -> Vec<String> { stems.iter().flat_map(|s| quartile_names(s)).collect() };
    let to_names = names(&["rel_to_err_m", "abs_to_err_m"]);
    write_aggregate(&paths.to_error, &to_names.iter().map(String::as_str).collect::<Vec<_>>(), &agg, |r| {
        [quartile_cells(&r.rel_to_err_m), quartile_cells(&r.abs_to_err_m)].concat()
    })?;
    let judged: Vec<AggregateRow> = agg.iter().filter(|r| r.resolution_probability.is_some()).cloned().collect();
    write_aggregate(&paths.resolution, &["resolution_probability"], &judged, |r| vec![cell(r.resolution_probability)])?;
    let delay_names = names(&["rel_delay_err_m", "abs_delay_err_m"]);
    write_aggregate(&paths.delay_error, &delay_names.iter().map(String::as_str).collect::<Vec<_>>(), &agg, |r| {
        [quartile_cells(&r.rel_delay_err_m), quartile_cells(&r.abs_delay_err_m)].concat()
    })?;
    let cgs_names = names(&["gamma_beta_db", "gamma_ideal_db"]);
    write_aggregate(&paths.cgs, &cgs_names.iter().map(String::as_str).collect::<Vec<_>>(), &agg, |r| {
        [quartile_cells(&r.gamma_beta_db), quartile_cells(&r.gamma_ideal_db)].concat()
    })?;
    Ok(paths)
}

fn read_rows<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// Reads the tidy tables back from a directory written by [`emit_outputs`].
pub fn read_table(dir: &Path) -> Result<MetricTable> {
    let paths = OutputPaths::in_dir(dir);
    let trials: Vec<TrialRow> = read_rows(&paths.trials)?;
    let targets: Vec<TargetRow> = read_rows(&paths.targets)?;
    let timings: Vec<TimingRow> = if paths.runtime.exists() {
        read_rows(&paths.runtime)?
    } else {
        Vec::new()
    };
    Ok(MetricTable { trials, targets, timings })
}
