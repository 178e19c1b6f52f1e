//! Report emission: JSON run reports, metric CSVs, atomic writes, and
//! content hashing of the inputs.
//!
//! Floats in CSVs are formatted to six significant digits so diffs between
//! runs are meaningful.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use frs_core::fed::EvalReport;
use frs_core::unlearn::UnlearnTrace;

pub const CONFIG_REPORT_VERSION: u32 = 1;

/// Everything needed to reproduce and audit one pipeline run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub version: u32,
    pub seed: u64,
    pub variant: String,
    pub skewed_class: usize,
    pub alpha: f64,
    /// The resolved configuration this run executed.
    pub config_echo: String,
    /// SHA-256 over the config echo and every referenced dataset file.
    pub content_hash: String,
    pub pretrain: TrainStageReport,
    pub unlearn: UnlearnStageReport,
    pub recovery: TrainStageReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainStageReport {
    pub rounds: Vec<EvalReport>,
    pub final_eval: EvalReport,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnlearnStageReport {
    pub eval: EvalReport,
    pub trace: UnlearnTrace,
    pub wall_ms: u64,
}

/// Six-significant-digit decimal formatting (no exponent notation for the
/// magnitudes that appear in metrics).
pub fn fmt_sig(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let magnitude = value.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{value:.decimals$}")
}

/// Writes bytes via a temp file in the same directory, then renames.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default(),
        std::process::id()
    ));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Serializes to pretty JSON and writes atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    atomic_write(path, text.as_bytes())
}

/// `sha256:<hex>` over the config echo plus the raw bytes of every listed
/// input file.
pub fn content_hash(config_echo: &str, input_files: &[&Path]) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(config_echo.as_bytes());
    for path in input_files {
        let bytes =
            fs::read(path).with_context(|| format!("hashing input {}", path.display()))?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(format!("sha256:{}", hex::encode(hasher.finalize())))
}

/// `sha256:<hex>` of one file.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(format!("sha256:{}", hex::encode(Sha256::digest(&bytes))))
}

/// Round-by-round metrics CSV:
/// `round,client_count,overall_acc,balanced_acc,skewed_acc,class_0..`.
pub fn metrics_csv(reports: &[EvalReport], client_count: usize) -> String {
    let mut out = String::new();
    let classes = reports.first().map_or(0, |r| r.per_class_accuracy.len());
    out.push_str("round,client_count,overall_acc,balanced_acc,skewed_acc");
    for c in 0..classes {
        let _ = write!(out, ",class_{c}");
    }
    out.push('\n');
    for (round, report) in reports.iter().enumerate() {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            round + 1,
            client_count,
            fmt_sig(report.overall_accuracy),
            fmt_sig(report.balanced_accuracy),
            fmt_sig(report.skewed_class_accuracy),
        );
        for &acc in &report.per_class_accuracy {
            let _ = write!(out, ",{}", fmt_sig(acc));
        }
        out.push('\n');
    }
    out
}

/// Generic small-table CSV writer: header plus preformatted rows.
pub fn table_csv(header: &str, rows: &[Vec<String>]) -> String {
    let mut out = String::with_capacity(rows.len() * 32);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Mean and (population) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
