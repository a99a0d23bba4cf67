//! CSV and JSON artifacts of each bench.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::bench::{AccuracyReport, ScaleReport, TimingReport, TrackingReport};

pub const ACCURACY_CSV: &str = "accuracy.csv";
pub const ACCURACY_SUMMARY_CSV: &str = "accuracy_summary.csv";
pub const SCALE_CSV: &str = "scale.csv";
pub const TIMING_CSV: &str = "timing.csv";
pub const TRACKING_CSV: &str = "tracking.csv";
pub const TRACKING_LONG_CSV: &str = "tracking_long.csv";

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct AccuracySummaryFile<'a> {
    summary: &'a [crate::bench::SummaryRow],
    excluded: &'a [crate::bench::Exclusion],
    violations: &'a [String],
}

pub fn write_accuracy(dir: &Path, r: &AccuracyReport) -> Result<Vec<PathBuf>> {
    let files = [
        dir.join(ACCURACY_CSV),
        dir.join(ACCURACY_SUMMARY_CSV),
        dir.join("accuracy_summary.json"),
    ];
    write_csv(&files[0], &r.table.rows)?;
    write_csv(&files[1], &r.table.summary)?;
    write_json(
        &files[2],
        &AccuracySummaryFile {
            summary: &r.table.summary,
            excluded: &r.table.excluded,
            violations: &r.table.violations,
        },
    )?;
    Ok(files.to_vec())
}

pub fn write_scale(dir: &Path, r: &ScaleReport) -> Result<Vec<PathBuf>> {
    let files = [dir.join(SCALE_CSV), dir.join("scale_summary.json")];
    write_csv(&files[0], &r.summary)?;
    write_json(&files[1], r)?;
    Ok(files.to_vec())
}

pub fn write_timing(dir: &Path, r: &TimingReport) -> Result<Vec<PathBuf>> {
    let files = [dir.join(TIMING_CSV), dir.join("timing_summary.json")];
    write_csv(&files[0], &r.rows)?;
    write_json(&files[1], r)?;
    Ok(files.to_vec())
}

#[derive(Serialize)]
struct TrackingSummaryFile<'a> {
    formula: &'a str,
    oracle: &'a str,
    scenario_seed: u64,
    mean_rmse_formula: f64,
    mean_rmse_oracle: f64,
    rmse_gap: f64,
    dominance_violations: &'a [usize],
    worst_dominance_gap: f64,
}

pub fn write_tracking(dir: &Path, r: &TrackingReport) -> Result<Vec<PathBuf>> {
    let files = [
        dir.join(TRACKING_CSV),
        dir.join(TRACKING_LONG_CSV),
        dir.join("tracking_summary.json"),
    ];
    write_csv(&files[0], &r.rows())?;
    write_csv(&files[1], &r.long_rows())?;
    write_json(
        &files[2],
        &TrackingSummaryFile {
            formula: &r.formula_name,
            oracle: &r.oracle_name,
            scenario_seed: r.scenario_seed,
            mean_rmse_formula: r.formula.mean_rmse(),
            mean_rmse_oracle: r.oracle.mean_rmse(),
            rmse_gap: r.rmse_gap,
            dominance_violations: &r.dominance_violations,
            worst_dominance_gap: r.worst_dominance_gap(),
        },
    )?;
    Ok(files.to_vec())
}
