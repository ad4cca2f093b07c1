//! Rows of the CSV files the commands write and `report` reads back.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let fail = |e: &dyn std::fmt::Display| CliError::Output(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| fail(&e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| fail(&e))?;
    for r in rows {
        w.serialize(r).map_err(|e| fail(&e))?;
    }
    w.flush().map_err(|e| fail(&e))
}

/// `None` if the file does not exist.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Option<Vec<T>>, CliError> {
    if !path.is_file() {
        return Ok(None);
    }
    let fail = |e: csv::Error| CliError::Usage(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(fail)?;
    Ok(Some(r.deserialize().collect::<Result<Vec<T>, _>>().map_err(fail)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub qoi: String,
    pub time: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub time: f64,
    pub tau: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub relative_change: f64,
    /// Largest relative liquid-mass imbalance over the substeps.
    pub balance: f64,
    pub newton_iterations: usize,
    pub krylov_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub level: usize,
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
    pub num_dofs: usize,
    pub steps: usize,
    pub substepped: usize,
    pub newton_iterations: usize,
    pub krylov_iterations: usize,
    pub c_min: f64,
    pub c_max: f64,
    pub max_balance: f64,
}

/// Screening statistics of one level for one scalar QoI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub qoi: String,
    pub time: f64,
    pub level: usize,
    pub samples: usize,
    pub mean_delta: f64,
    pub var_delta: f64,
    pub mean_fine: f64,
    pub var_fine: f64,
    pub cv: f64,
    pub mean_cost: f64,
    pub mean_fine_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesRow {
    pub qoi: String,
    pub time: f64,
    pub alpha: f64,
    pub c1: f64,
    pub beta: f64,
    pub c2: f64,
    pub gamma: f64,
    pub c3: f64,
    /// `beta >= alpha`.
    pub consistent: bool,
    /// `ok` or the reason the fit failed.
    pub status: String,
}

/// One level of an executed MLMC plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanLevelRow {
    pub level: usize,
    pub samples: usize,
    pub exact_samples: f64,
    pub planned_variance: f64,
    pub planned_cost: f64,
    pub modeled: bool,
    pub mean_delta: f64,
    pub var_delta: f64,
    pub mean_fine: f64,
    pub var_fine: f64,
    pub mean_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub qoi: String,
    pub time: f64,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldStatRow {
    pub slot: usize,
    pub x: f64,
    pub y: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmcSummaryRow {
    pub tol: f64,
    pub e0: f64,
    /// Finest level `L`.
    pub finest: usize,
    /// Per-level sample counts, space separated.
    pub samples: String,
    pub alpha: f64,
    pub c1: f64,
    pub beta: f64,
    pub c2: f64,
    pub gamma: f64,
    pub mean: f64,
    pub std_error: f64,
    pub variance: f64,
    pub bias: f64,
    pub predicted_cost: f64,
    pub realized_cost: f64,
    pub mc_cost_estimate: f64,
    pub cost_measure: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummaryRow {
    pub tol: f64,
    pub level: usize,
    pub samples: usize,
    pub mean: f64,
    pub std_error: f64,
    pub variance: f64,
    pub realized_cost: f64,
    pub cost_measure: String,
}

/// Wall-clock seconds, kept apart from the deterministic outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub run: String,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub tol: f64,
    pub finest: usize,
    pub mlmc_predicted: f64,
    pub mlmc_realized: f64,
    pub mc_estimate: f64,
    pub mc_realized: Option<f64>,
    /// Asymptotic curves scaled to the realized MLMC cost at the largest tolerance.
    pub theory_mlmc: f64,
    pub theory_mc: f64,
    pub mlmc_cheaper: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub qoi: String,
    pub time: f64,
    pub level: usize,
    pub log2_abs_mean_delta: f64,
    pub log2_var_delta: f64,
    pub fit_log2_abs_mean_delta: f64,
    pub fit_log2_var_delta: f64,
}
