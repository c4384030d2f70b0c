use super::{AlignmentReport, HarnessError, SweepReport};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const ALIGN_CSV_HEADER: &str =
    "scenario_id,co_visible,neighbor,method,translation_error_m,rotation_error_deg,success,bytes";
pub const ALIGN_TIMING_HEADER: &str = "scenario_id,co_visible,neighbor,method,time_s";
pub const SWEEP_CSV_HEADER: &str = "scenario_id,method,sigma_t,sigma_r,iou_thr,ap";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes through a sibling temp file so readers never see a partial artifact.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

/// `align.csv` (one row per scenario, neighbor and method) and `align.json`
/// (aggregates). With timing enabled, wall times go to `align_timing.csv` and
/// `align_timing.json`.
pub fn emit_alignment_report(report: &AlignmentReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut csv = String::from(ALIGN_CSV_HEADER);
    csv.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.scenario_id,
            opt(r.co_visible),
            r.neighbor,
            r.method,
            opt(r.translation_error_m),
            opt(r.rotation_error_deg),
            r.success,
            r.bytes
        );
    }
    let mut written = vec![dir.join("align.csv"), dir.join("align.json")];
    write_atomic(&written[0], csv.as_bytes())?;
    write_atomic(&written[1], &json(&serde_json::json!({ "summaries": report.summaries })))?;

    if report.rows.iter().any(|r| r.time_s.is_some()) {
        let mut t = String::from(ALIGN_TIMING_HEADER);
        t.push('\n');
        for r in &report.rows {
            let _ = writeln!(t, "{},{},{},{},{}", r.scenario_id, opt(r.co_visible), r.neighbor, r.method, opt(r.time_s));
        }
        let means: Vec<_> = report
            .summaries
            .iter()
            .map(|s| serde_json::json!({ "method": s.method, "co_visible": s.co_visible, "mean_time_s": s.mean_time_s }))
            .collect();
        let csv_path = dir.join("align_timing.csv");
        let json_path = dir.join("align_timing.json");
        write_atomic(&csv_path, t.as_bytes())?;
        write_atomic(&json_path, &json(&means))?;
        written.extend([csv_path, json_path]);
    }
    Ok(written)
}

/// `sweep.csv` (one row per scenario, method, level and threshold) and
/// `sweep.json` (mean AP per cell).
pub fn emit_sweep_report(report: &SweepReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut csv = String::from(SWEEP_CSV_HEADER);
    csv.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.scenario_id,
            r.method,
            r.sigma_t,
            r.sigma_r,
            r.iou_thr,
            opt(r.ap)
        );
    }
    let csv_path = dir.join("sweep.csv");
    let json_path = dir.join("sweep.json");
    write_atomic(&csv_path, csv.as_bytes())?;
    write_atomic(&json_path, &json(&serde_json::json!({ "cells": report.cells })))?;
    Ok(vec![csv_path, json_path])
}
