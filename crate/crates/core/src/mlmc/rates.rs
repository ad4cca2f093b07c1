//! Level statistics, rate fits, level count, sample allocation and cost models.

use super::sampling::{CostMeasure, SampleRecord};
use crate::error::{Error, Result};

/// Statistics of one output component on one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSummary {
    pub level: usize,
    pub samples: usize,
    pub mean_delta: f64,
    /// Unbiased; NaN with fewer than two samples.
    pub var_delta: f64,
    pub mean_fine: f64,
    pub var_fine: f64,
    /// Mean cost of one coupled sample.
    pub mean_cost: f64,
    /// Mean cost of the fine simulation alone.
    pub mean_fine_cost: f64,
}

impl LevelSummary {
    /// `sigma(g_l) / E[g_l]`.
    pub fn coefficient_of_variation(&self) -> f64 {
        self.var_fine.sqrt() / self.mean_fine
    }
}

/// Mean and unbiased variance, two-pass.
pub(crate) fn mean_var(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = xs.map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1) as f64)
}

/// Summarize component `k` of the records of one level.
pub fn summarize(records: &[SampleRecord], k: usize, measure: CostMeasure) -> Result<LevelSummary> {
    let Some(first) = records.first() else {
        return Err(Error::Invalid("no samples to summarize".into()));
    };
    if records.iter().any(|r| r.level != first.level) {
        return Err(Error::Invalid("records from several levels".into()));
    }
    let (mean_delta, var_delta) = mean_var(records.iter().map(|r| r.sample.delta(k)));
    let (mean_fine, var_fine) = mean_var(records.iter().map(|r| r.sample.fine[k]));
    let n = records.len() as f64;
    Ok(LevelSummary {
        level: first.level,
        samples: records.len(),
        mean_delta,
        var_delta,
        mean_fine,
        var_fine,
        mean_cost: records.iter().map(|r| r.sample.cost.total(measure)).sum::<f64>() / n,
        mean_fine_cost: records.iter().map(|r| r.sample.cost.fine(measure)).sum::<f64>() / n,
    })
}

/// Least-squares line `y = a + b x`; returns `(a, b, residuals)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64, Vec<f64>)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::FitFailed(format!("need at least two points, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::FitFailed("abscissae coincide".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let res = x.iter().zip(y).map(|(u, v)| v - (a + b * u)).collect();
    Ok((a, b, res))
}

/// Weak, strong and cost rates with their constants.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// `|E[g_l - g_{l-1}]| ~ c1 2^(-alpha l)`.
    pub alpha: f64,
    pub c1: f64,
    /// `Var[g_l - g_{l-1}] ~ c2 2^(-beta l)`.
    pub beta: f64,
    pub c2: f64,
    /// `s_l ~ c3 2^(d_hat gamma l)`.
    pub gamma: f64,
    pub c3: f64,
    pub d_hat: f64,
    /// Log2 residuals (level, residual) of each regression.
    pub weak_residuals: Vec<(usize, f64)>,
    pub strong_residuals: Vec<(usize, f64)>,
    pub cost_residuals: Vec<(usize, f64)>,
}

impl RateFit {
    /// `alpha >= min(beta, d_hat gamma) / 2`.
    pub fn is_consistent(&self) -> bool {
        self.alpha >= 0.5 * self.beta.min(self.gamma * self.d_hat)
    }

    pub fn model_variance(&self, level: usize) -> f64 {
        self.c2 * (-self.beta * level as f64).exp2()
    }

    pub fn model_cost(&self, level: usize) -> f64 {
        self.c3 * (self.d_hat * self.gamma * level as f64).exp2()
    }

    pub fn model_bias(&self, level: usize) -> f64 {
        self.c1 * (-self.alpha * level as f64).exp2()
    }
}

fn log_fit(points: impl Iterator<Item = (usize, f64)>, what: &str) -> Result<(f64, f64, Vec<(usize, f64)>)> {
    let pts: Vec<(usize, f64)> = points.filter(|(_, v)| v.is_finite() && *v > 0.0).collect();
    let x: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.log2()).collect();
    let (a, b, res) = fit_line(&x, &y).map_err(|e| Error::FitFailed(format!("{what}: {e}")))?;
    Ok((a, b, pts.iter().map(|p| p.0).zip(res).collect()))
}

/// Fit the rates from per-level summaries; weak and strong use `l >= 1`, cost all levels.
pub fn fit_rates(levels: &[LevelSummary], d_hat: f64) -> Result<RateFit> {
    let upper = || levels.iter().filter(|s| s.level >= 1);
    let (a1, b1, weak_residuals) = log_fit(upper().map(|s| (s.level, s.mean_delta.abs())), "weak rate")?;
    let (a2, b2, strong_residuals) = log_fit(upper().map(|s| (s.level, s.var_delta)), "strong rate")?;
    let (a3, b3, cost_residuals) = log_fit(levels.iter().map(|s| (s.level, s.mean_cost)), "cost rate")?;
    let fit = RateFit {
        alpha: -b1,
        c1: a1.exp2(),
        beta: -b2,
        c2: a2.exp2(),
        gamma: b3 / d_hat,
        c3: a3.exp2(),
        d_hat,
        weak_residuals,
        strong_residuals,
        cost_residuals,
    };
    for (name, v) in [("alpha", fit.alpha), ("beta", fit.beta), ("gamma", fit.gamma)] {
        if !(v > 0.0) {
            return Err(Error::FitFailed(format!("{name} = {v} is not positive")));
        }
    }
    Ok(fit)
}

/// Raw level count `-(1/alpha) log2(tol E0 / (sqrt 2 c1))` before rounding.
pub fn raw_level_count(tol: f64, e0: f64, alpha: f64, c1: f64) -> f64 {
    -(tol * e0 / (std::f64::consts::SQRT_2 * c1)).log2() / alpha
}

/// Finest level so that the squared bias stays below `tol^2 E0^2 / 2`.
pub fn choose_levels(tol: f64, e0: f64, alpha: f64, c1: f64, l_max: usize) -> usize {
    let raw = raw_level_count(tol, e0, alpha, c1).ceil();
    if raw <= 0.0 {
        0
    } else {
        (raw as usize).min(l_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Optimal real-valued sample counts.
    pub exact: Vec<f64>,
    pub samples: Vec<usize>,
    /// `(2 / (tol^2 E0^2)) (sum sqrt(V s))^2`.
    pub predicted_cost: f64,
}

/// Cost-optimal samples per level for `sum V_l / m_l = tol^2 E0^2 / 2`.
pub fn allocate_samples(tol: f64, e0: f64, variances: &[f64], costs: &[f64]) -> Result<Allocation> {
    if variances.len() != costs.len() || variances.is_empty() {
        return Err(Error::Dimension { expected: variances.len(), got: costs.len() });
    }
    if variances.iter().any(|v| !(*v >= 0.0)) || costs.iter().any(|s| !(*s > 0.0)) || !(tol > 0.0 && e0 > 0.0) {
        return Err(Error::Invalid("allocation needs V >= 0, s > 0, tol > 0 and E0 > 0".into()));
    }
    let k = 2.0 / (tol * tol * e0 * e0);
    let sum: f64 = variances.iter().zip(costs).map(|(v, s)| (v * s).sqrt()).sum();
    if sum == 0.0 {
        let n = variances.len();
        return Ok(Allocation { exact: vec![1.0; n], samples: vec![1; n], predicted_cost: costs.iter().sum() });
    }
    let exact: Vec<f64> = variances.iter().zip(costs).map(|(v, s)| k * (v / s).sqrt() * sum).collect();
    let samples = exact.iter().map(|m| (m.ceil() as usize).max(1)).collect();
    Ok(Allocation { exact, samples, predicted_cost: k * sum * sum })
}

/// Cost of plain Monte Carlo on level `L` meeting the same variance target.
pub fn mc_cost_estimate(var_l: f64, s_l: f64, tol: f64, e0: f64) -> f64 {
    2.0 / (tol * tol * e0 * e0) * var_l * s_l
}

/// Asymptotic cost `tol^exponent`, possibly times `log(tol)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostRegime {
    pub exponent: f64,
    pub log_squared: bool,
}

impl CostRegime {
    /// Curve value up to a constant.
    pub fn eval(&self, tol: f64) -> f64 {
        let base = tol.powf(self.exponent);
        if self.log_squared {
            base * tol.ln().powi(2)
        } else {
            base
        }
    }
}

/// MLMC cost regime for the given rates.
pub fn mlmc_cost_regime(alpha: f64, beta: f64, gamma: f64, d_hat: f64) -> CostRegime {
    let dg = d_hat * gamma;
    if (beta - dg).abs() <= 1e-9 * dg.abs().max(1.0) {
        CostRegime { exponent: -2.0, log_squared: true }
    } else if beta > dg {
        CostRegime { exponent: -2.0, log_squared: false }
    } else {
        CostRegime { exponent: -(2.0 + (dg - beta) / alpha), log_squared: false }
    }
}

/// Plain Monte Carlo regime `tol^-(2 + d_hat gamma / alpha)`.
pub fn mc_cost_regime(alpha: f64, gamma: f64, d_hat: f64) -> CostRegime {
    CostRegime { exponent: -(2.0 + d_hat * gamma / alpha), log_squared: false }
}

/// Theoretical MLMC and MC cost curves over `tols`, up to constants.
pub fn theoretical_cost_curves(alpha: f64, beta: f64, gamma: f64, d_hat: f64, tols: &[f64]) -> Vec<(f64, f64, f64)> {
    let ml = mlmc_cost_regime(alpha, beta, gamma, d_hat);
    let mc = mc_cost_regime(alpha, gamma, d_hat);
    tols.iter().map(|&t| (t, ml.eval(t), mc.eval(t))).collect()
}
