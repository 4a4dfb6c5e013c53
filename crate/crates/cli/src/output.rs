//! Report assembly and persistence.
//!
//! A run produces exactly one `report.json` (full-precision JSON embedding
//! the resolved configuration and its hash), one `resolved_config.json`,
//! and zero or more CSV tables with documented, stable column schemas.
//! Nothing is written until the whole command has succeeded, so a failed
//! run leaves no output files behind.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use qcurv_core::error::{QcurvError, Result};
use qcurv_core::geometry::product::ProductManifold4D;
use qcurv_core::paneitz::{gauss_bonnet_defect, paneitz_operator, spectrum_of, total_q};

use crate::config::RunConfig;

/// One plot-ready CSV table: a header line and pre-formatted data rows.
#[derive(Debug, Clone)]
pub struct CsvTable {
    /// File name (always `*.csv`, no directories).
    pub name: String,
    pub header: String,
    pub rows: Vec<String>,
}

impl CsvTable {
    pub fn render(&self) -> String {
        let mut text = String::with_capacity(self.header.len() + 16 * self.rows.len());
        text.push_str(&self.header);
        text.push('\n');
        for row in &self.rows {
            text.push_str(row);
            text.push('\n');
        }
        text
    }
}

/// Result body plus CSV tables, as returned by each command.
pub struct CommandOutcome {
    pub result: serde_json::Value,
    pub csvs: Vec<CsvTable>,
}

/// Invariant summary of the model a run executed on, embedded in every
/// report so downstream numbers are traceable to a checked geometry.
#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub volume: f64,
    pub euler_characteristic: i64,
    pub n_modes: usize,
    /// Product quadrature nodes (`0` for spectral-only models).
    pub n_nodes: usize,
    /// Total curvature integral `k_P`.
    pub total_curvature: f64,
    /// Four-dimensional Gauss-Bonnet residual (`null` when the model has
    /// no quadrature rule to evaluate it).
    pub gauss_bonnet_defect: Option<f64>,
    pub operator_negative_modes: usize,
    pub operator_kernel_dimension: usize,
    pub diameter: Option<f64>,
}

impl ModelSummary {
    pub fn compute(m: &ProductManifold4D) -> Result<Self> {
        let op = paneitz_operator(m)?;
        let spec = spectrum_of(&op, 1);
        Ok(ModelSummary {
            volume: m.volume,
            euler_characteristic: m.euler_char,
            n_modes: m.n_modes(),
            n_nodes: m.n_nodes(),
            total_curvature: total_q(m)?,
            gauss_bonnet_defect: gauss_bonnet_defect(m).ok(),
            operator_negative_modes: spec.negative_count,
            operator_kernel_dimension: spec.kernel_dim,
            diameter: m.diameter().ok(),
        })
    }
}

/// The full report document written to `report.json`.
#[derive(Serialize)]
pub struct ReportEnvelope {
    pub command: String,
    pub seed: u64,
    /// SHA-256 of the bytes of `resolved_config.json`.
    pub config_sha256: String,
    pub truncation: TruncationInfo,
    pub model: ModelSummary,
    pub result: serde_json::Value,
    pub csv_files: Vec<String>,
    /// The fully resolved configuration (identical to
    /// `resolved_config.json`).
    pub config: serde_json::Value,
}

#[derive(Serialize)]
pub struct TruncationInfo {
    pub s_max: f64,
    pub n_modes: usize,
}

/// Assemble the report and serialize everything, without touching the
/// filesystem yet.
pub struct RenderedRun {
    pub report_json: String,
    pub resolved_config_json: String,
    pub csvs: Vec<CsvTable>,
}

pub fn render_run(
    command: &str,
    config: &RunConfig,
    m: &ProductManifold4D,
    outcome: CommandOutcome,
) -> Result<RenderedRun> {
    let resolved_config_json = to_pretty_json(config)?;
    let mut hasher = Sha256::new();
    hasher.update(resolved_config_json.as_bytes());
    let config_sha256 = format!("{:x}", hasher.finalize());

    let envelope = ReportEnvelope {
        command: command.to_string(),
        seed: config.seed,
        config_sha256,
        truncation: TruncationInfo {
            s_max: m.s_max,
            n_modes: m.n_modes(),
        },
        model: ModelSummary::compute(m)?,
        result: outcome.result,
        csv_files: outcome.csvs.iter().map(|t| t.name.clone()).collect(),
        config: serde_json::to_value(config)
            .map_err(|e| QcurvError::Config(format!("config serialization failed: {e}")))?,
    };
    Ok(RenderedRun {
        report_json: to_pretty_json(&envelope)?,
        resolved_config_json,
        csvs: outcome.csvs,
    })
}

/// Write the rendered outputs into `dir`, creating it if needed.
pub fn write_run(dir: &Path, run: &RenderedRun) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), &run.report_json)?;
    std::fs::write(dir.join("resolved_config.json"), &run.resolved_config_json)?;
    for table in &run.csvs {
        std::fs::write(dir.join(&table.name), table.render())?;
    }
    Ok(())
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| QcurvError::Config(format!("report serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Shortest round-trip decimal for a float, with non-finite values spelled
/// so CSV consumers can parse them.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}
