//! Seeded coupled samples and the worker pool that runs them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::params::{Provenance, SamplePoint};

/// Which cost figure drives planning and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostMeasure {
    /// Measured wall-clock seconds.
    Wall,
    /// Deterministic work count (DOFs times solver iterations).
    #[default]
    Work,
}

impl CostMeasure {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "wall" => Ok(CostMeasure::Wall),
            "work" => Ok(CostMeasure::Work),
            _ => Err(Error::Invalid(format!("unknown cost measure `{s}` (expected `wall` or `work`)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CostMeasure::Wall => "wall",
            CostMeasure::Work => "work",
        }
    }
}

/// Cost of one coupled sample, split into the fine and coarse simulation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SampleCost {
    pub wall: [f64; 2],
    pub work: [f64; 2],
}

impl SampleCost {
    pub fn total(&self, measure: CostMeasure) -> f64 {
        let [a, b] = self.get(measure);
        a + b
    }

    /// Cost of the fine simulation alone.
    pub fn fine(&self, measure: CostMeasure) -> f64 {
        self.get(measure)[0]
    }

    fn get(&self, measure: CostMeasure) -> [f64; 2] {
        match measure {
            CostMeasure::Wall => self.wall,
            CostMeasure::Work => self.work,
        }
    }
}

/// `g_l(xi)` and, for `l > 0`, `g_{l-1}(xi)` for every output component.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSample {
    pub fine: Vec<f64>,
    pub coarse: Option<Vec<f64>>,
    pub cost: SampleCost,
}

impl CoupledSample {
    /// `g_l - g_{l-1}` with `g_{-1} = 0`.
    pub fn delta(&self, k: usize) -> f64 {
        self.fine[k] - self.coarse.as_ref().map_or(0.0, |c| c[k])
    }

    /// `g_l^2 - g_{l-1}^2`.
    pub fn delta_squares(&self, k: usize) -> f64 {
        self.fine[k] * self.fine[k] - self.coarse.as_ref().map_or(0.0, |c| c[k] * c[k])
    }
}

/// Produces coupled samples on MLMC levels.
pub trait LevelSampler: Sync {
    /// Number of output components per sample.
    fn num_outputs(&self) -> usize;
    fn max_level(&self) -> usize;
    /// `g_level(point)`, paired with `g_{level-1}(point)` when `coupled` and `level > 0`.
    fn sample(&self, level: usize, point: &SamplePoint, coupled: bool) -> Result<CoupledSample>;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of sample `index` on `level` for the task `tag`; `attempt` counts replacements.
pub fn sample_seed(root: u64, tag: &str, level: usize, index: usize, attempt: usize) -> u64 {
    let mut tag_hash = 0xcbf2_9ce4_8422_2325u64;
    for b in tag.bytes() {
        tag_hash = (tag_hash ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    let mut h = splitmix64(root ^ splitmix64(tag_hash));
    for word in [level as u64, index as u64, attempt as u64] {
        h = splitmix64(h ^ word);
    }
    h
}

/// Independent `xi ~ U[-1, 1]^3` for one (level, index, attempt).
pub fn draw_sample_point(root: u64, tag: &str, level: usize, index: usize, attempt: usize) -> SamplePoint {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(root, tag, level, index, attempt));
    let xi = [(); 3].map(|_| rng.random_range(-1.0..=1.0));
    SamplePoint { xi, provenance: Some(Provenance { level, index, root_seed: root }) }
}

/// One accepted coupled sample and the draws it replaced.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub level: usize,
    pub index: usize,
    pub point: SamplePoint,
    pub sample: CoupledSample,
    /// Failed draws that were replaced, with their error messages.
    pub failures: Vec<(SamplePoint, String)>,
}

/// Seeds and failure policy of a batch of samples.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    pub root_seed: u64,
    pub tag: String,
    /// Numerical failures tolerated over the whole batch.
    pub failure_budget: usize,
    /// Pair each sample with the next coarser level (false for plain Monte Carlo).
    pub coupled: bool,
}

impl SamplingPlan {
    pub fn new(root_seed: u64, tag: impl Into<String>) -> Self {
        SamplingPlan { root_seed, tag: tag.into(), failure_budget: 16, coupled: true }
    }

    /// Draw sample `(level, index)`, replacing the point after numerical failures.
    pub fn draw(&self, sampler: &dyn LevelSampler, level: usize, index: usize) -> Result<SampleRecord> {
        let mut failures = Vec::new();
        for attempt in 0..=self.failure_budget {
            let point = draw_sample_point(self.root_seed, &self.tag, level, index, attempt);
            match sampler.sample(level, &point, self.coupled) {
                Ok(sample) => return Ok(SampleRecord { level, index, point, sample, failures }),
                Err(e) if e.is_numerical() => failures.push((point, e.to_string())),
                Err(e) => return Err(e),
            }
        }
        Err(Error::FailureBudget { failures: failures.len(), budget: self.failure_budget })
    }
}

/// Bounded pool of workers running independent samples.
pub struct SamplePool {
    pool: rayon::ThreadPool,
}

impl SamplePool {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Invalid("worker count must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Invalid(format!("cannot start worker pool: {e}")))?;
        Ok(SamplePool { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Run `jobs` (level, index) and return the records in job order.
    ///
    /// `on_done` sees each record as it completes, in scheduling order.
    pub fn run(
        &self,
        sampler: &dyn LevelSampler,
        plan: &SamplingPlan,
        jobs: &[(usize, usize)],
        on_done: &(dyn Fn(&SampleRecord) + Sync),
    ) -> Result<Vec<SampleRecord>> {
        let results: Vec<Result<SampleRecord>> = self.pool.install(|| {
            jobs.par_iter()
                .map(|&(level, index)| {
                    let rec = plan.draw(sampler, level, index)?;
                    on_done(&rec);
                    Ok(rec)
                })
                .collect()
        });
        let records = results.into_iter().collect::<Result<Vec<_>>>()?;
        let failures: usize = records.iter().map(|r| r.failures.len()).sum();
        if failures > plan.failure_budget {
            return Err(Error::FailureBudget { failures, budget: plan.failure_budget });
        }
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Echo;

    impl LevelSampler for Echo {
        fn num_outputs(&self) -> usize {
            3
        }
        fn max_level(&self) -> usize {
            4
        }
        fn sample(&self, level: usize, point: &SamplePoint, coupled: bool) -> Result<CoupledSample> {
            if point.xi[0] > 0.8 {
                return Err(Error::NewtonFailed { iterations: 1, residual: 1.0 });
            }
            let fine = point.xi.to_vec();
            let coarse = (coupled && level > 0).then(|| point.xi.iter().map(|x| 0.5 * x).collect());
            Ok(CoupledSample { fine, coarse, cost: SampleCost { wall: [0.0; 2], work: [1.0, 0.0] } })
        }
    }

    #[test]
    fn seeds_separate_every_coordinate() {
        let base = sample_seed(7, "screen", 1, 2, 0);
        assert_eq!(base, sample_seed(7, "screen", 1, 2, 0));
        for other in [
            sample_seed(8, "screen", 1, 2, 0),
            sample_seed(7, "mlmc", 1, 2, 0),
            sample_seed(7, "screen", 2, 1, 0),
            sample_seed(7, "screen", 1, 3, 0),
            sample_seed(7, "screen", 1, 2, 1),
        ] {
            assert_ne!(base, other);
        }
    }

    #[test]
    fn points_are_uniform_on_the_cube() {
        let n = 4000;
        let mut mean = [0.0; 3];
        for i in 0..n {
            let p = draw_sample_point(1, "t", 0, i, 0);
            for k in 0..3 {
                assert!(p.xi[k].abs() <= 1.0);
                mean[k] += p.xi[k] / n as f64;
            }
        }
        // Standard error of the mean is 1/sqrt(3n) ~ 0.009.
        assert!(mean.iter().all(|m| m.abs() < 0.04), "{mean:?}");
    }

    #[test]
    fn failed_draws_are_replaced() {
        let plan = SamplingPlan::new(3, "t");
        let pool = SamplePool::new(2).unwrap();
        let jobs: Vec<_> = (0..40).map(|i| (1, i)).collect();
        let seen = AtomicUsize::new(0);
        let recs = pool
            .run(&Echo, &SamplingPlan { failure_budget: 100, ..plan }, &jobs, &|_| {
                seen.fetch_add(1, Ordering::Relaxed);
            })
            .unwrap();
        assert_eq!(seen.load(Ordering::Relaxed), 40);
        assert!(recs.iter().all(|r| r.point.xi[0] <= 0.8));
        assert!(recs.iter().any(|r| !r.failures.is_empty()));
        assert_eq!(recs.iter().map(|r| r.index).collect::<Vec<_>>(), (0..40).collect::<Vec<_>>());
        assert_eq!(recs[5].sample.delta(1), 0.5 * recs[5].point.xi[1]);
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let plan = SamplingPlan { failure_budget: 0, ..SamplingPlan::new(3, "t") };
        let pool = SamplePool::new(1).unwrap();
        let jobs: Vec<_> = (0..100).map(|i| (0, i)).collect();
        assert!(matches!(pool.run(&Echo, &plan, &jobs, &|_| {}), Err(Error::FailureBudget { .. })));
    }

    #[test]
    fn records_do_not_depend_on_workers() {
        let plan = SamplingPlan { failure_budget: 100, ..SamplingPlan::new(11, "t") };
        let jobs: Vec<_> = (0..30).map(|i| (i % 3, i)).collect();
        let a = SamplePool::new(1).unwrap().run(&Echo, &plan, &jobs, &|_| {}).unwrap();
        let b = SamplePool::new(4).unwrap().run(&Echo, &plan, &jobs, &|_| {}).unwrap();
        assert_eq!(a, b);
    }
}
