//! Multilevel Monte Carlo: screening, planning, telescoping estimation.

mod pde;
mod rates;
mod sampling;
mod synthetic;

pub use pde::{level_table, LevelConfig, OutputBlock, PdeSampler};
pub use rates::{
    allocate_samples, choose_levels, fit_line, fit_rates, mc_cost_estimate, mc_cost_regime, mlmc_cost_regime,
    raw_level_count, summarize, theoretical_cost_curves, Allocation, CostRegime, LevelSummary, RateFit,
};
pub use sampling::{
    draw_sample_point, sample_seed, CostMeasure, CoupledSample, LevelSampler, SampleCost, SamplePool, SampleRecord,
    SamplingPlan,
};
pub use synthetic::SyntheticSampler;

use crate::error::{Error, Result};
use rates::mean_var;

/// Dimension of the space-time cost model `d + 1`.
pub const COST_DIMENSION: f64 = 3.0;

/// Below this many screening samples the model variance bounds the sample variance.
pub const MODEL_VARIANCE_THRESHOLD: usize = 10;

/// Coupled samples per level from the preprocessing run.
#[derive(Debug, Clone)]
pub struct Screening {
    pub levels: Vec<Vec<SampleRecord>>,
}

impl Screening {
    pub fn summaries(&self, k: usize, measure: CostMeasure) -> Result<Vec<LevelSummary>> {
        self.levels.iter().map(|r| summarize(r, k, measure)).collect()
    }

    pub fn fit(&self, k: usize, measure: CostMeasure) -> Result<RateFit> {
        fit_rates(&self.summaries(k, measure)?, COST_DIMENSION)
    }

    /// Scaling `E0 = |E[g_0]|` of component `k`.
    pub fn e0(&self, k: usize) -> f64 {
        let l0 = &self.levels[0];
        (l0.iter().map(|r| r.sample.fine[k]).sum::<f64>() / l0.len() as f64).abs()
    }
}

/// Draw `samples` coupled samples on every level `0..=max_level`.
pub fn run_screening(
    sampler: &dyn LevelSampler,
    pool: &SamplePool,
    plan: &SamplingPlan,
    max_level: usize,
    samples: usize,
    on_done: &(dyn Fn(&SampleRecord) + Sync),
) -> Result<Screening> {
    if max_level < 2 || samples < 2 {
        return Err(Error::Invalid(format!(
            "screening needs at least levels 0..=2 and 2 samples, got 0..={max_level} and {samples}"
        )));
    }
    if max_level > sampler.max_level() {
        return Err(Error::Invalid(format!("level {max_level} exceeds the sampler ({})", sampler.max_level())));
    }
    let jobs: Vec<(usize, usize)> = (0..=max_level).flat_map(|l| (0..samples).map(move |i| (l, i))).collect();
    let records = pool.run(sampler, plan, &jobs, on_done)?;
    Ok(Screening { levels: group_by_level(records, max_level) })
}

fn group_by_level(records: Vec<SampleRecord>, max_level: usize) -> Vec<Vec<SampleRecord>> {
    let mut levels = vec![Vec::new(); max_level + 1];
    for r in records {
        levels[r.level].push(r);
    }
    for l in &mut levels {
        l.sort_by_key(|r| r.index);
    }
    levels
}

/// Draw `samples[l]` samples on each level `l`, grouped by level.
pub fn draw_levels(
    sampler: &dyn LevelSampler,
    pool: &SamplePool,
    sampling: &SamplingPlan,
    samples: &[usize],
    on_done: &(dyn Fn(&SampleRecord) + Sync),
) -> Result<Vec<Vec<SampleRecord>>> {
    if samples.is_empty() || samples.len() > sampler.max_level() + 1 {
        return Err(Error::Invalid(format!("cannot draw on {} levels", samples.len())));
    }
    let jobs: Vec<(usize, usize)> = samples.iter().enumerate().flat_map(|(l, &m)| (0..m).map(move |i| (l, i))).collect();
    Ok(group_by_level(pool.run(sampler, sampling, &jobs, on_done)?, samples.len() - 1))
}

/// Levels, variances, costs and samples chosen for one tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmcPlan {
    pub tol: f64,
    pub e0: f64,
    /// Finest level `L`.
    pub finest: usize,
    pub variances: Vec<f64>,
    pub costs: Vec<f64>,
    /// Levels whose variance or cost came from the fitted model.
    pub modeled: Vec<bool>,
    pub allocation: Allocation,
    /// Screening statistics the plan was made from.
    pub screened: Vec<LevelSummary>,
}

impl MlmcPlan {
    pub fn samples(&self) -> &[usize] {
        &self.allocation.samples
    }
}

/// Plan an MLMC run from screening statistics and fitted rates.
pub fn plan_mlmc(tol: f64, e0: f64, screened: &[LevelSummary], fit: &RateFit, l_max: usize) -> Result<MlmcPlan> {
    if !(tol > 0.0) || !(e0 > 0.0) {
        return Err(Error::Invalid(format!("tolerance {tol} and scaling {e0} must be positive")));
    }
    let finest = choose_levels(tol, e0, fit.alpha, fit.c1, l_max);
    let mut variances = Vec::new();
    let mut costs = Vec::new();
    let mut modeled = Vec::new();
    for l in 0..=finest {
        let s = screened.iter().find(|s| s.level == l && s.samples >= 2);
        let (v, c, m) = match s {
            Some(s) if l == 0 => (s.var_delta, s.mean_cost, false),
            Some(s) if s.samples < MODEL_VARIANCE_THRESHOLD => {
                let model = fit.model_variance(l);
                (s.var_delta.max(model), s.mean_cost, model > s.var_delta)
            }
            Some(s) => (s.var_delta, s.mean_cost, false),
            None if l == 0 => return Err(Error::Invalid("level 0 was not screened".into())),
            None => (fit.model_variance(l), fit.model_cost(l), true),
        };
        variances.push(v);
        costs.push(c);
        modeled.push(m);
    }
    let allocation = allocate_samples(tol, e0, &variances, &costs)?;
    Ok(MlmcPlan { tol, e0, finest, variances, costs, modeled, allocation, screened: screened.to_vec() })
}

/// Telescoped moments of every output component.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub mean: Vec<f64>,
    pub second_moment: Vec<f64>,
    /// `E[g^2] - E[g]^2`, floored at 0.
    pub variance: Vec<f64>,
    /// `sum_l V_l / m_l`.
    pub estimator_variance: Vec<f64>,
}

/// Sum the level corrections; `fallback(l, k)` is used for `V_l` on levels with one sample.
pub fn telescope(levels: &[Vec<SampleRecord>], outputs: usize, fallback: &dyn Fn(usize, usize) -> f64) -> Estimate {
    let mut mean = vec![0.0; outputs];
    let mut second_moment = vec![0.0; outputs];
    let mut estimator_variance = vec![0.0; outputs];
    for recs in levels.iter().filter(|r| !r.is_empty()) {
        let m = recs.len() as f64;
        let level = recs[0].level;
        for k in 0..outputs {
            let (md, vd) = mean_var(recs.iter().map(|r| r.sample.delta(k)));
            mean[k] += md;
            second_moment[k] += recs.iter().map(|r| r.sample.delta_squares(k)).sum::<f64>() / m;
            let v = if recs.len() >= 2 { vd } else { fallback(level, k) };
            estimator_variance[k] += v / m;
        }
    }
    let variance = mean.iter().zip(&second_moment).map(|(y, s)| (s - y * y).max(0.0)).collect();
    Estimate { mean, second_moment, variance, estimator_variance }
}

#[derive(Debug, Clone)]
pub struct MlmcResult {
    pub plan: MlmcPlan,
    /// Component the plan was made for.
    pub target: usize,
    pub estimate: Estimate,
    /// Per-level statistics of the target component.
    pub levels: Vec<LevelSummary>,
    /// Weak-model bias `c1 2^(-alpha L)`.
    pub bias: f64,
    /// Total cost of all samples drawn.
    pub realized_cost: f64,
    /// Cost of single-level Monte Carlo on level `L` for the same tolerance.
    pub mc_cost: f64,
    pub records: Vec<Vec<SampleRecord>>,
}

impl MlmcResult {
    pub fn mean(&self) -> f64 {
        self.estimate.mean[self.target]
    }

    pub fn standard_error(&self) -> f64 {
        self.estimate.estimator_variance[self.target].sqrt()
    }
}

/// Draw the planned samples and build the telescoping estimate.
pub fn run_estimator(
    sampler: &dyn LevelSampler,
    pool: &SamplePool,
    sampling: &SamplingPlan,
    plan: &MlmcPlan,
    fit: &RateFit,
    target: usize,
    measure: CostMeasure,
    on_done: &(dyn Fn(&SampleRecord) + Sync),
) -> Result<MlmcResult> {
    if plan.finest > sampler.max_level() {
        return Err(Error::Invalid(format!("plan needs level {} beyond {}", plan.finest, sampler.max_level())));
    }
    let records = draw_levels(sampler, pool, sampling, plan.samples(), on_done)?;
    let fallback = |l: usize, k: usize| if k == target && l > 0 { fit.model_variance(l) } else { 0.0 };
    let estimate = telescope(&records, sampler.num_outputs(), &fallback);
    let levels = records.iter().map(|r| summarize(r, target, measure)).collect::<Result<Vec<_>>>()?;
    let realized_cost = records.iter().flatten().map(|r| r.sample.cost.total(measure)).sum();
    let top = levels.last().unwrap();
    let s_l = top.mean_fine_cost;
    let mc_cost = mc_cost_estimate(mc_variance(&plan.screened, &levels), s_l, plan.tol, plan.e0);
    Ok(MlmcResult {
        plan: plan.clone(),
        target,
        estimate,
        levels,
        bias: fit.model_bias(plan.finest),
        realized_cost,
        mc_cost,
        records,
    })
}

/// `Var[g_L]` for the Monte Carlo reference cost: the sample variance of `g` on the
/// finest level with at least two samples, from screening or estimation, whichever
/// has more samples there.
///
/// The telescoped variance is not used: with one or a few samples on the fine
/// levels its second-moment corrections are far noisier than `Var[g]` itself.
pub fn mc_variance(screened: &[LevelSummary], drawn: &[LevelSummary]) -> f64 {
    screened
        .iter()
        .chain(drawn)
        .filter(|s| s.samples >= 2 && s.var_fine.is_finite())
        .max_by_key(|s| (s.level, s.samples))
        .map_or(0.0, |s| s.var_fine)
}

#[derive(Debug, Clone)]
pub struct McResult {
    pub level: usize,
    pub estimate: Estimate,
    pub realized_cost: f64,
    pub records: Vec<SampleRecord>,
}

/// Plain Monte Carlo with `samples` uncoupled draws on `level`.
pub fn run_mc(
    sampler: &dyn LevelSampler,
    pool: &SamplePool,
    sampling: &SamplingPlan,
    level: usize,
    samples: usize,
    measure: CostMeasure,
    on_done: &(dyn Fn(&SampleRecord) + Sync),
) -> Result<McResult> {
    let plan = SamplingPlan { coupled: false, ..sampling.clone() };
    let jobs: Vec<(usize, usize)> = (0..samples).map(|i| (level, i)).collect();
    let records = pool.run(sampler, &plan, &jobs, on_done)?;
    let estimate = telescope(std::slice::from_ref(&records), sampler.num_outputs(), &|_, _| 0.0);
    let realized_cost = records.iter().map(|r| r.sample.cost.total(measure)).sum();
    Ok(McResult { level, estimate, realized_cost, records })
}

/// Mean and variance fields over `len` components starting at `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldStatistics {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl FieldStatistics {
    pub fn from_estimate(estimate: &Estimate, offset: usize, len: usize) -> Self {
        FieldStatistics {
            mean: estimate.mean[offset..offset + len].to_vec(),
            variance: estimate.variance[offset..offset + len].to_vec(),
        }
    }

    /// Index and value of the largest variance.
    pub fn variance_peak(&self) -> (usize, f64) {
        self.variance.iter().copied().enumerate().fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SamplePoint;
    use proptest::prelude::*;

    struct Constant;

    impl LevelSampler for Constant {
        fn num_outputs(&self) -> usize {
            2
        }
        fn max_level(&self) -> usize {
            5
        }
        fn sample(&self, level: usize, p: &SamplePoint, coupled: bool) -> Result<CoupledSample> {
            let g = vec![p.xi[0], 4.0];
            let coarse = (coupled && level > 0).then(|| g.clone());
            Ok(CoupledSample { fine: g, coarse, cost: SampleCost { wall: [1.0, 0.0], work: [1.0, 0.5] } })
        }
    }

    fn record(level: usize, index: usize, fine: f64, coarse: Option<f64>) -> SampleRecord {
        SampleRecord {
            level,
            index,
            point: SamplePoint::deterministic(),
            sample: CoupledSample { fine: vec![fine], coarse: coarse.map(|c| vec![c]), cost: SampleCost::default() },
            failures: Vec::new(),
        }
    }

    #[test]
    fn two_level_mean() {
        let levels = vec![vec![record(0, 0, 1.0, None), record(0, 1, 3.0, None)], vec![record(1, 0, 2.5, Some(2.0))]];
        let e = telescope(&levels, 1, &|_, _| 0.0);
        assert_eq!(e.mean[0], 2.5);
    }

    #[test]
    fn level_independent_corrections_vanish() {
        let pool = SamplePool::new(2).unwrap();
        let plan = SamplingPlan::new(5, "c");
        let s = run_screening(&Constant, &pool, &plan, 3, 6, &|_| {}).unwrap();
        for l in 1..=3 {
            for r in &s.levels[l] {
                assert_eq!(r.sample.delta(0), 0.0);
                assert_eq!(r.sample.delta_squares(0), 0.0);
            }
        }
        let e = telescope(&s.levels, 2, &|_, _| 0.0);
        let plain = s.levels[0].iter().map(|r| r.sample.fine[0]).sum::<f64>() / 6.0;
        assert_eq!(e.mean[0], plain);
        assert_eq!(e.variance[1], 0.0);
        assert_eq!(e.mean[1], 4.0);
    }

    #[test]
    fn single_level_constant_field_has_no_variance() {
        let levels = vec![(0..5).map(|i| record(0, i, 0.7, None)).collect::<Vec<_>>()];
        let e = telescope(&levels, 1, &|_, _| 0.0);
        let f = FieldStatistics::from_estimate(&e, 0, 1);
        assert_eq!(f.variance, vec![0.0]);
        assert!((f.mean[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn mc_variance_uses_the_finest_well_sampled_level() {
        let summary = |level: usize, samples: usize, var_fine: f64| LevelSummary {
            level,
            samples,
            mean_delta: 0.0,
            var_delta: 0.0,
            mean_fine: 1.0,
            var_fine,
            mean_cost: 1.0,
            mean_fine_cost: 1.0,
        };
        let screened = [summary(0, 8, 1.0), summary(1, 8, 2.0), summary(2, 8, 3.0)];
        let drawn = [summary(0, 40, 1.5), summary(1, 13, 2.5), summary(2, 3, 3.5), summary(3, 1, f64::NAN)];
        assert_eq!(mc_variance(&screened, &drawn), 3.0);
        assert_eq!(mc_variance(&screened[..2], &drawn), 3.5);
        assert_eq!(mc_variance(&[], &drawn[3..]), 0.0);
    }

    #[test]
    fn screening_preconditions() {
        let pool = SamplePool::new(1).unwrap();
        let plan = SamplingPlan::new(5, "c");
        assert!(run_screening(&Constant, &pool, &plan, 1, 6, &|_| {}).is_err());
        assert!(run_screening(&Constant, &pool, &plan, 2, 1, &|_| {}).is_err());
        assert!(run_screening(&Constant, &pool, &plan, 6, 2, &|_| {}).is_err());
    }

    #[test]
    fn synthetic_screening_recovers_rates() {
        let pool = SamplePool::new(2).unwrap();
        let syn = SyntheticSampler::new(1.0, 1.0, 8);
        let s = run_screening(&syn, &pool, &SamplingPlan::new(9, "screen"), 4, 40, &|_| {}).unwrap();
        let fit = s.fit(0, CostMeasure::Work).unwrap();
        // The corrections are -2^-l (1 + 0.1 xi_2): the weak rate is exact up to noise in xi_2.
        assert!((fit.alpha - 1.0).abs() < 0.05, "{}", fit.alpha);
        assert!((fit.beta - 2.0).abs() < 0.3, "{}", fit.beta);
        // Coupled costs are 8^l (1 + 1/8) above level 0.
        assert!((fit.gamma - 1.0).abs() < 0.03, "{}", fit.gamma);
    }

    #[test]
    fn model_variance_guards_small_levels() {
        let fit = RateFit {
            alpha: 1.0,
            c1: 1.0,
            beta: 2.0,
            c2: 1.0,
            gamma: 1.0,
            c3: 1.0,
            d_hat: 3.0,
            weak_residuals: vec![],
            strong_residuals: vec![],
            cost_residuals: vec![],
        };
        let s = |level, samples, var| LevelSummary {
            level,
            samples,
            mean_delta: 0.0,
            var_delta: var,
            mean_fine: 1.0,
            var_fine: 1.0,
            mean_cost: 8f64.powi(level as i32),
            mean_fine_cost: 1.0,
        };
        let screened = [s(0, 8, 1.0), s(1, 8, 1e-6), s(2, 20, 1e-6)];
        let plan = plan_mlmc(0.2, 1.0, &screened, &fit, 3).unwrap();
        assert_eq!(plan.finest, 3);
        assert_eq!(plan.variances[0], 1.0);
        assert_eq!(plan.variances[1], 0.25);
        assert_eq!(plan.variances[2], 1e-6);
        assert_eq!(plan.variances[3], 1.0 / 64.0);
        assert_eq!(plan.modeled, vec![false, true, false, true]);
        assert_eq!(plan.costs[3], 512.0);
    }

    proptest! {
        #[test]
        fn estimate_is_permutation_invariant(
            g in prop::collection::vec(-5.0f64..5.0, 2..30),
            seed in any::<u64>(),
        ) {
            let recs: Vec<_> = g.iter().enumerate().map(|(i, &v)| record(0, i, v, None)).collect();
            let mut shuffled = recs.clone();
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = telescope(&[recs], 1, &|_, _| 0.0);
            let b = telescope(&[shuffled], 1, &|_, _| 0.0);
            prop_assert!((a.mean[0] - b.mean[0]).abs() <= 1e-12 * (1.0 + a.mean[0].abs()));
            prop_assert!((a.variance[0] - b.variance[0]).abs() <= 1e-10 * (1.0 + a.variance[0]));
            prop_assert!(a.estimator_variance[0] >= 0.0);
        }
    }
}
