//! Plot-ready tables assembled from the outputs of earlier commands.

use std::path::Path;

use brine_mlmc::mlmc::{theoretical_cost_curves, COST_DIMENSION};

use crate::tables::*;
use crate::CliError;

/// Cost table against the tolerance, one row per MLMC run.
pub fn cost_table(mlmc: &[MlmcSummaryRow], mc: &[McSummaryRow]) -> Vec<CostRow> {
    let Some(first) = mlmc.iter().max_by(|a, b| a.tol.total_cmp(&b.tol)) else {
        return Vec::new();
    };
    let tols: Vec<f64> = mlmc.iter().map(|r| r.tol).collect();
    let curves = theoretical_cost_curves(first.alpha, first.beta, first.gamma, COST_DIMENSION, &tols);
    let anchor = curves.iter().zip(mlmc).find(|(_, r)| r.tol == first.tol).map(|(c, _)| *c).unwrap();
    let (ml_scale, mc_scale) = (first.realized_cost / anchor.1, first.mc_cost_estimate / anchor.2);
    mlmc.iter()
        .zip(&curves)
        .map(|(r, &(_, ml, mcc))| CostRow {
            tol: r.tol,
            finest: r.finest,
            mlmc_predicted: r.predicted_cost,
            mlmc_realized: r.realized_cost,
            mc_estimate: r.mc_cost_estimate,
            mc_realized: mc.iter().find(|m| m.tol == r.tol).map(|m| m.realized_cost),
            theory_mlmc: ml * ml_scale,
            theory_mc: mcc * mc_scale,
            mlmc_cheaper: r.realized_cost < r.mc_cost_estimate,
        })
        .collect()
}

/// `log2 |E[Delta_l]|` and `log2 V_l` per level next to the fitted lines.
pub fn decay_table(levels: &[LevelRow], rates: &[RatesRow]) -> Vec<DecayRow> {
    levels
        .iter()
        .map(|l| {
            let fit = rates.iter().find(|r| r.qoi == l.qoi && r.time == l.time);
            let line = |c: fn(&RatesRow) -> f64, rate: fn(&RatesRow) -> f64| {
                fit.map_or(f64::NAN, |f| c(f).log2() - rate(f) * l.level as f64)
            };
            DecayRow {
                qoi: l.qoi.clone(),
                time: l.time,
                level: l.level,
                log2_abs_mean_delta: l.mean_delta.abs().log2(),
                log2_var_delta: l.var_delta.log2(),
                fit_log2_abs_mean_delta: line(|f| f.c1, |f| f.alpha),
                fit_log2_var_delta: line(|f| f.c2, |f| f.beta),
            }
        })
        .collect()
}

pub fn run(dir: &Path) -> Result<(), CliError> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("results directory {} does not exist", dir.display())));
    }
    let mlmc: Option<Vec<MlmcSummaryRow>> = read_csv(&dir.join("mlmc/summary.csv"))?;
    let mc: Option<Vec<McSummaryRow>> = read_csv(&dir.join("mc/summary.csv"))?;
    let levels: Option<Vec<LevelRow>> = read_csv(&dir.join("screen/levels.csv"))?;
    let rates: Option<Vec<RatesRow>> = read_csv(&dir.join("screen/rates.csv"))?;
    if mlmc.as_ref().is_none_or(Vec::is_empty) && levels.as_ref().is_none_or(Vec::is_empty) {
        return Err(CliError::Usage(format!(
            "{} holds neither mlmc/summary.csv nor screen/levels.csv; run `screen` or `mlmc` first",
            dir.display()
        )));
    }
    let out = dir.join("report");
    if let Some(mlmc) = mlmc.filter(|m| !m.is_empty()) {
        let table = cost_table(&mlmc, mc.as_deref().unwrap_or_default());
        write_csv(&out.join("cost_vs_tol.csv"), &table)?;
        for r in &table {
            let verdict = if r.mlmc_cheaper { "cheaper" } else { "not cheaper" };
            println!("tol {}: MLMC cost {:.4e} vs MC estimate {:.4e} ({verdict})", r.tol, r.mlmc_realized, r.mc_estimate);
        }
    }
    if let Some(levels) = levels {
        let table = decay_table(&levels, rates.as_deref().unwrap_or_default());
        write_csv(&out.join("decay.csv"), &table)?;
    }
    println!("tables written to {}", out.display());
    Ok(())
}
