//! Ensemble tables from a finished experiment directory.

use std::path::Path;

use anyhow::bail;
use gris_core::diagnostics::{aggregate, AggregatePoint, ErrorDecomposition, RunSummary};
use serde::{Deserialize, Serialize};

use crate::experiment::RunArtifact;
use crate::output::{fmt17, write_csv};

pub const CHECKPOINT_FILE: &str = "report_checkpoints.csv";
pub const RUNS_FILE: &str = "report_runs.csv";
pub const BOX_FILE: &str = "report_box.csv";
pub const EVIDENCE_FILE: &str = "report_evidence.csv";

/// Linearly interpolated quantile of sorted data (the "type 7" rule).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Box-plot summary with whiskers at the most extreme data within
/// 1.5 IQR of the quartiles, never inside the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub metric: String,
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: usize,
}

pub fn box_stats(metric: &str, values: &[f64]) -> BoxStats {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| *x >= lo_fence && *x <= hi_fence).collect();
    BoxStats {
        metric: metric.to_string(),
        n: v.len(),
        q1,
        median,
        q3,
        whisker_lo: inside.first().map_or(q1, |w| w.min(q1)),
        whisker_hi: inside.last().map_or(q3, |w| w.max(q3)),
        outliers: v.len() - inside.len(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub dim: usize,
    pub checkpoints: Vec<AggregatePoint>,
    pub runs: Vec<RunSummary>,
    pub boxes: Vec<BoxStats>,
}

pub fn build_report(artifact: &RunArtifact) -> anyhow::Result<Report> {
    if artifact.runs.is_empty() {
        bail!("the artifact holds no completed runs");
    }
    let dim = artifact.truth.dim();
    let traces: Vec<_> = artifact.runs.iter().map(|r| r.checkpoints.clone()).collect();
    let checkpoints = aggregate(&traces, &artifact.truth)?;
    let mut boxes = vec![box_stats("max_se", &artifact.runs.iter().map(|r| r.max_se).collect::<Vec<_>>())];
    for k in 0..dim {
        boxes.push(box_stats(&format!("se_mean_{}", k + 1), &artifact.runs.iter().map(|r| r.se[k]).collect::<Vec<_>>()));
    }
    Ok(Report { dim, checkpoints, runs: artifact.runs.clone(), boxes })
}

fn decomposition_header(prefix: &str, d: usize) -> Vec<String> {
    let mut h = Vec::new();
    for part in ["bias2", "variance", "mse"] {
        h.extend((1..=d).map(|k| format!("{prefix}_{part}_{k}")));
        h.push(format!("{prefix}_{part}"));
    }
    h
}

fn decomposition_row(e: &ErrorDecomposition) -> Vec<String> {
    let mut row = Vec::new();
    for part in [&e.bias2, &e.variance, &e.mse] {
        row.extend(part.iter().map(|v| fmt17(*v)));
        row.push(fmt17(ErrorDecomposition::pooled(part)));
    }
    row
}

pub fn write_report(dir: &Path, report: &Report) -> anyhow::Result<()> {
    let d = report.dim;
    let mut header = vec!["eval_count".to_string()];
    header.extend(decomposition_header("mean", d));
    header.extend(decomposition_header("var", d));
    let rows: Vec<Vec<String>> = report
        .checkpoints
        .iter()
        .map(|c| {
            let mut row = vec![c.eval_count.to_string()];
            row.extend(decomposition_row(&c.mean));
            row.extend(decomposition_row(&c.var));
            row
        })
        .collect();
    write_csv(&dir.join(CHECKPOINT_FILE), &header, &rows)?;

    let mut header = vec!["run_id".to_string()];
    header.extend((1..=d).map(|k| format!("se_mean_{k}")));
    header.extend(["max_se", "ess_is", "ess_mc", "acceptance_rate", "log_evidence"].map(String::from));
    let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    let rows: Vec<Vec<String>> = report
        .runs
        .iter()
        .map(|r| {
            let mut row = vec![r.run_id.to_string()];
            row.extend(r.se.iter().map(|v| fmt17(*v)));
            row.extend([fmt17(r.max_se), opt(r.ess_is), opt(r.ess_mc), opt(r.acceptance_rate), opt(r.log_evidence)]);
            row
        })
        .collect();
    write_csv(&dir.join(RUNS_FILE), &header, &rows)?;

    let header = ["metric", "n", "q1", "median", "q3", "whisker_lo", "whisker_hi", "outliers"].map(String::from);
    let rows: Vec<Vec<String>> = report
        .boxes
        .iter()
        .map(|b| {
            vec![
                b.metric.clone(),
                b.n.to_string(),
                fmt17(b.q1),
                fmt17(b.median),
                fmt17(b.q3),
                fmt17(b.whisker_lo),
                fmt17(b.whisker_hi),
                b.outliers.to_string(),
            ]
        })
        .collect();
    write_csv(&dir.join(BOX_FILE), &header, &rows)?;

    let evidence: Vec<Vec<String>> = report
        .checkpoints
        .iter()
        .filter_map(|c| c.log_evidence.as_ref().map(|e| vec![c.eval_count.to_string(), fmt17(e.bias2[0]), fmt17(e.variance[0]), fmt17(e.mse[0])]))
        .collect();
    if !evidence.is_empty() {
        write_csv(&dir.join(EVIDENCE_FILE), &["eval_count", "bias2", "variance", "mse"].map(String::from), &evidence)?;
    }
    Ok(())
}

/// Loads `summary.json` from `dir`, writes the report tables next to it.
pub fn report(dir: &Path) -> anyhow::Result<Report> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let artifact = RunArtifact::load(dir)?;
    let r = build_report(&artifact)?;
    write_report(dir, &r)?;
    Ok(r)
}
