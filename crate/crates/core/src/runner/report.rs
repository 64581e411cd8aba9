//! Experiment reports: a CSV with one row per method and setting, plus a JSON
//! sidecar carrying the config echo, training summaries and wall times.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ScenarioConfig, ScenarioKind};
use crate::error::Result;

pub const CSV_COLUMNS: [&str; 9] = [
    "scenario",
    "method",
    "degree_or_setting",
    "xi_rmse",
    "coeff_rmse",
    "omega_rmse",
    "kappa",
    "seed",
    "wall_time_s",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub method: String,
    pub degree_or_setting: String,
    pub xi_rmse: f64,
    pub coeff_rmse: f64,
    pub omega_rmse: f64,
    pub kappa: f64,
    pub seed: u64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub steps: usize,
    pub converged: bool,
    /// Mean batch loss over the last convergence window.
    pub final_loss: f64,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
    /// Measured wall time of each row, whether or not the CSV carries it.
    pub measured_wall_time_s: Vec<f64>,
    pub models: Vec<ModelSummary>,
    /// Free-form findings, e.g. which least-squares frame did better.
    pub notes: BTreeMap<String, String>,
    pub config: ScenarioConfig,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    crate_version: &'static str,
    ordering_version: u32,
    model_schema_version: u32,
    csv_columns: [&'static str; 9],
    scenario: ScenarioKind,
    seed: u64,
    rows: &'a [ReportRow],
    measured_wall_time_s: &'a [f64],
    models: &'a [ModelSummary],
    notes: &'a BTreeMap<String, String>,
    /// TOML text, so infinite SNR values survive.
    config: String,
}

impl ExperimentReport {
    pub fn row(&self, method: &str, setting: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.degree_or_setting == setting)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| crate::Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_sidecar_json(&self) -> Result<String> {
        let sidecar = Sidecar {
            crate_version: env!("CARGO_PKG_VERSION"),
            ordering_version: crate::bases::ORDERING_VERSION,
            model_schema_version: crate::nnet::SCHEMA_VERSION,
            csv_columns: CSV_COLUMNS,
            scenario: self.scenario,
            seed: self.seed,
            rows: &self.rows,
            measured_wall_time_s: &self.measured_wall_time_s,
            models: &self.models,
            notes: &self.notes,
            config: self.config.to_toml_string()?,
        };
        Ok(serde_json::to_string_pretty(&sidecar)? + "\n")
    }

    /// Writes `<scenario>.csv` and `<scenario>.json` into `dir`; returns the
    /// CSV path.
    pub fn emit(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.scenario));
        std::fs::write(&csv_path, self.to_csv()?)?;
        std::fs::write(
            dir.join(format!("{}.json", self.scenario)),
            self.to_sidecar_json()?,
        )?;
        Ok(csv_path)
    }
}

/// Reads the rows back from a CSV written by [`ExperimentReport::emit`].
pub fn read_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
