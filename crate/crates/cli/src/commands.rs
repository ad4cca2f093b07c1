//! The `solve`, `screen`, `mlmc` and `mc` commands.

use std::fs;
use std::path::{Path, PathBuf};

use brine_mlmc::discretization::{simulate, write_vtk, StepReport};
use brine_mlmc::mesh::MeshHierarchy;
use brine_mlmc::mlmc::{
    choose_levels, plan_mlmc, run_estimator, run_mc, run_screening, CostMeasure, Estimate, OutputBlock, PdeSampler,
    RateFit, SamplePool, SampleRecord, SamplingPlan, Screening,
};
use brine_mlmc::params::{build_scenario, SamplePoint};
use brine_mlmc::qoi::QoiKind;

use crate::config::RunConfig;
use crate::log::ResultsLog;
use crate::tables::*;
use crate::{CliError, Overrides};

/// Tag of the screening samples in the results log.
pub const SCREEN_TAG: &str = "screen";

pub fn mlmc_tag(tol: f64) -> String {
    format!("mlmc-tol{tol}")
}

pub fn mc_tag(tol: f64) -> String {
    format!("mc-tol{tol}")
}

/// Per-tolerance output directory name.
pub fn tol_dir(tol: f64) -> String {
    format!("tol_{tol}")
}

/// A loaded configuration with command-line overrides applied.
pub struct Context {
    pub cfg: RunConfig,
    pub hierarchy: MeshHierarchy,
    pub out: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub level: Option<usize>,
    pub tols: Vec<f64>,
    pub resume: bool,
    pub xi: Option<[f64; 3]>,
}

fn progress(tag: &str) -> impl Fn(&SampleRecord) + Sync + '_ {
    move |r: &SampleRecord| {
        let retried = if r.failures.is_empty() { String::new() } else { format!(" after {} failures", r.failures.len()) };
        eprintln!("{tag}: level {} sample {}{retried}", r.level, r.index);
    }
}

fn scalar_blocks(pde: &PdeSampler<'_>) -> Vec<OutputBlock> {
    pde.layout().iter().filter(|b| b.len == 1).cloned().collect()
}

fn total_wall(records: &[Vec<SampleRecord>]) -> f64 {
    records.iter().flatten().map(|r| r.sample.cost.total(CostMeasure::Wall)).sum()
}

fn fit_failure(e: &brine_mlmc::Error) -> String {
    e.to_string().replace(['\n', '\r'], " ")
}

impl Context {
    pub fn new(cfg: RunConfig, o: &Overrides) -> Result<Self, CliError> {
        let workers = o.workers.unwrap_or(cfg.workers);
        if workers == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        let tols = o.tol.map_or_else(|| cfg.mlmc.tol.clone(), |t| vec![t]);
        if tols.is_empty() || tols.iter().any(|t| !(*t > 0.0)) {
            return Err(CliError::Usage("tolerances must be positive".into()));
        }
        let xi = match o.xi.as_deref() {
            None => None,
            Some(&[a, b, c]) => Some([a, b, c]),
            Some(v) => return Err(CliError::Usage(format!("--xi takes three values, got {}", v.len()))),
        };
        let hierarchy = MeshHierarchy::load(&cfg.mesh.path, cfg.mesh.max_level)?;
        Ok(Context {
            out: o.out.clone().unwrap_or_else(|| cfg.out.clone()),
            seed: o.seed.unwrap_or(cfg.seed),
            workers,
            level: o.level,
            tols,
            resume: o.resume,
            xi,
            hierarchy,
            cfg,
        })
    }

    pub fn sampler(&self) -> Result<PdeSampler<'_>, CliError> {
        Ok(PdeSampler::new(
            &self.hierarchy,
            self.cfg.constants()?,
            self.cfg.model(),
            self.cfg.qoi_specs()?,
            self.cfg.simulation()?,
        )?)
    }

    fn sampling(&self, tag: &str) -> SamplingPlan {
        SamplingPlan { failure_budget: self.cfg.mlmc.failure_budget, ..SamplingPlan::new(self.seed, tag) }
    }

    fn open_log(&self, fresh: &[&str]) -> Result<ResultsLog, CliError> {
        ResultsLog::open(&self.out, if self.resume { &[] } else { fresh })
    }

    fn screening(&self, log: &ResultsLog, pde: &PdeSampler<'_>, pool: &SamplePool, levels: usize) -> Result<Screening, CliError> {
        let logged = log.sampler(pde, SCREEN_TAG)?;
        if logged.replayed() > 0 {
            eprintln!("{SCREEN_TAG}: {} samples read from {}", logged.replayed(), log.path().display());
        }
        let levels = levels.min(self.hierarchy.max_level());
        Ok(run_screening(&logged, pool, &self.sampling(SCREEN_TAG), levels, self.cfg.screen.samples, &progress(SCREEN_TAG))?)
    }

    fn target(&self, pde: &PdeSampler<'_>) -> Result<usize, CliError> {
        let m = &self.cfg.mlmc;
        pde.block(&m.target, m.time)
            .map(|b| b.offset)
            .ok_or_else(|| CliError::Usage(format!("no output for `{}` at {} s", m.target, m.time)))
    }

    pub fn solve(&self) -> Result<(), CliError> {
        let level = self.level.unwrap_or(self.cfg.solve.level);
        if level > self.hierarchy.max_level() {
            return Err(CliError::Usage(format!("level {level} exceeds mesh.max_level = {}", self.hierarchy.max_level())));
        }
        let point = SamplePoint::new(self.xi.unwrap_or(self.cfg.solve.xi))?;
        let scenario = build_scenario(&point, &self.cfg.constants()?, &self.cfg.model())?;
        let qois: Vec<_> = self.cfg.qoi_specs()?.into_iter().filter(|q| !q.is_field()).collect();
        let sim = brine_mlmc::discretization::SimulationConfig { record_balance: true, ..self.cfg.simulation()? };
        let mesh = self.hierarchy.level(level);
        let dofs = self.hierarchy.dofs(level);
        let vtk_times = &self.cfg.solve.vtk_times;
        let mut steps = Vec::new();
        let mut snapshots = Vec::new();
        let mut observe = |r: &StepReport<'_>| {
            steps.push(StepRow {
                time: r.time,
                tau: r.tau,
                c_min: r.c_min,
                c_max: r.c_max,
                relative_change: r.relative_change,
                balance: r.balance.iter().map(|b| b.relative()).fold(0.0, f64::max),
                newton_iterations: r.solves.iter().map(|s| s.newton_iterations).sum(),
                krylov_iterations: r.solves.iter().flat_map(|s| &s.krylov_iterations).sum(),
            });
            if vtk_times.iter().any(|&t| (t - r.time).abs() <= 1e-9 * t.max(1.0)) {
                snapshots.push((r.time, write_vtk(mesh, dofs, r.state)));
            }
        };
        let out = simulate(&self.hierarchy, level, &scenario, &qois, &sim, Some(&mut observe))?;
        let dir = self.out.join("solve");
        let final_time = out.final_state.time;
        if !snapshots.iter().any(|(t, _)| *t == final_time) {
            snapshots.push((final_time, write_vtk(mesh, dofs, &out.final_state)));
        }
        fs::create_dir_all(&dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
        for (t, text) in &snapshots {
            let path = dir.join(format!("state_t{t}.vtk"));
            fs::write(&path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
        }
        let series: Vec<SeriesRow> = out
            .series
            .iter()
            .flat_map(|s| s.values.iter().map(|&(time, value)| SeriesRow { qoi: s.id.clone(), time, value }))
            .collect();
        write_csv(&dir.join("series.csv"), &series)?;
        write_csv(&dir.join("steps.csv"), &steps)?;
        let summary = SolveSummary {
            level,
            xi1: point.xi[0],
            xi2: point.xi[1],
            xi3: point.xi[2],
            num_dofs: out.cost.num_dofs,
            steps: out.cost.steps,
            substepped: out.cost.substepped,
            newton_iterations: out.cost.newton_iterations,
            krylov_iterations: out.cost.krylov_iterations,
            c_min: steps.iter().map(|s| s.c_min).fold(f64::INFINITY, f64::min),
            c_max: steps.iter().map(|s| s.c_max).fold(f64::NEG_INFINITY, f64::max),
            max_balance: steps.iter().map(|s| s.balance).fold(0.0, f64::max),
        };
        write_csv(&dir.join("summary.csv"), std::slice::from_ref(&summary))?;
        write_csv(&dir.join("timing.csv"), &[TimingRow { run: "solve".into(), wall_seconds: out.cost.wall_seconds }])?;
        if summary.c_min < -1e-6 || summary.c_max > 1.0 + 1e-6 {
            eprintln!("warning: mass fraction left [0, 1]: min {:e}, max {:e}", summary.c_min, summary.c_max);
        }
        println!(
            "level {level}: {} steps, {} Newton / {} Krylov iterations, c in [{:.3e}, {:.6}], balance {:.1e}",
            summary.steps, summary.newton_iterations, summary.krylov_iterations, summary.c_min, summary.c_max, summary.max_balance
        );
        Ok(())
    }

    pub fn screen(&self) -> Result<(), CliError> {
        let pde = self.sampler()?;
        let pool = SamplePool::new(self.workers)?;
        let log = self.open_log(&[SCREEN_TAG])?;
        let levels = self.level.unwrap_or(self.cfg.screen.levels);
        let screening = self.screening(&log, &pde, &pool, levels)?;
        let rates = self.write_screen_tables(&pde, &screening)?;
        println!("{:<12} {:>8} {:>8} {:>10} {:>8} {:>10} {:>8}", "qoi", "time", "alpha", "c1", "beta", "c2", "gamma");
        for r in &rates {
            println!(
                "{:<12} {:>8} {:>8.3} {:>10.3e} {:>8.3} {:>10.3e} {:>8.3}",
                r.qoi, r.time, r.alpha, r.c1, r.beta, r.c2, r.gamma
            );
        }
        Ok(())
    }

    /// Per-level statistics and fitted rates of every scalar output.
    fn write_screen_tables(&self, pde: &PdeSampler<'_>, screening: &Screening) -> Result<Vec<RatesRow>, CliError> {
        let measure = self.cfg.cost_measure()?;
        let mut level_rows = Vec::new();
        let mut rates = Vec::new();
        for b in scalar_blocks(pde) {
            let summaries = screening.summaries(b.offset, measure)?;
            for s in &summaries {
                level_rows.push(LevelRow {
                    qoi: b.id.clone(),
                    time: b.time,
                    level: s.level,
                    samples: s.samples,
                    mean_delta: s.mean_delta,
                    var_delta: s.var_delta,
                    mean_fine: s.mean_fine,
                    var_fine: s.var_fine,
                    cv: s.coefficient_of_variation(),
                    mean_cost: s.mean_cost,
                    mean_fine_cost: s.mean_fine_cost,
                });
            }
            let row = |f: Option<&RateFit>, status: String| {
                let g = |x: fn(&RateFit) -> f64| f.map_or(f64::NAN, x);
                RatesRow {
                    qoi: b.id.clone(),
                    time: b.time,
                    alpha: g(|f| f.alpha),
                    c1: g(|f| f.c1),
                    beta: g(|f| f.beta),
                    c2: g(|f| f.c2),
                    gamma: g(|f| f.gamma),
                    c3: g(|f| f.c3),
                    consistent: f.is_some_and(RateFit::is_consistent),
                    status,
                }
            };
            match screening.fit(b.offset, measure) {
                Ok(f) => rates.push(row(Some(&f), "ok".into())),
                Err(e) => {
                    eprintln!("screen: fit for `{}` at {} s failed: {e}", b.id, b.time);
                    rates.push(row(None, format!("failed: {}", fit_failure(&e))));
                }
            }
        }
        let dir = self.out.join("screen");
        write_csv(&dir.join("levels.csv"), &level_rows)?;
        write_csv(&dir.join("rates.csv"), &rates)?;
        write_csv(&dir.join("timing.csv"), &[TimingRow { run: SCREEN_TAG.into(), wall_seconds: total_wall(&screening.levels) }])?;
        Ok(rates)
    }

    pub fn mlmc(&self) -> Result<(), CliError> {
        let pde = self.sampler()?;
        let pool = SamplePool::new(self.workers)?;
        let tags: Vec<String> = self.tols.iter().map(|&t| mlmc_tag(t)).collect();
        let log = self.open_log(&tags.iter().map(String::as_str).collect::<Vec<_>>())?;
        let measure = self.cfg.cost_measure()?;
        let k = self.target(&pde)?;
        let screening = self.screening(&log, &pde, &pool, self.cfg.screen.levels)?;
        self.write_screen_tables(&pde, &screening)?;
        let fit = match self.cfg.mlmc.rates {
            Some(r) => r.to_fit(brine_mlmc::mlmc::COST_DIMENSION),
            None => screening.fit(k, measure)?,
        };
        let summaries = screening.summaries(k, measure)?;
        let e0 = screening.e0(k);
        let l_max = self.level.map_or(self.cfg.l_max(), |l| l.min(self.hierarchy.max_level()));
        let dir = self.out.join("mlmc");
        let summary_path = dir.join("summary.csv");
        let timing_path = dir.join("timing.csv");
        for (&tol, tag) in self.tols.iter().zip(&tags) {
            let plan = plan_mlmc(tol, e0, &summaries, &fit, l_max)?;
            eprintln!("{tag}: L = {}, samples {:?}", plan.finest, plan.samples());
            let logged = log.sampler(&pde, tag)?;
            let result = run_estimator(&logged, &pool, &self.sampling(tag), &plan, &fit, k, measure, &progress(tag))?;
            let tdir = dir.join(tol_dir(tol));
            let rows: Vec<PlanLevelRow> = result
                .levels
                .iter()
                .map(|s| PlanLevelRow {
                    level: s.level,
                    samples: s.samples,
                    exact_samples: plan.allocation.exact[s.level],
                    planned_variance: plan.variances[s.level],
                    planned_cost: plan.costs[s.level],
                    modeled: plan.modeled[s.level],
                    mean_delta: s.mean_delta,
                    var_delta: s.var_delta,
                    mean_fine: s.mean_fine,
                    var_fine: s.var_fine,
                    mean_cost: s.mean_cost,
                })
                .collect();
            write_csv(&tdir.join("levels.csv"), &rows)?;
            self.write_estimates(&pde, &tdir, &result.estimate)?;
            let row = MlmcSummaryRow {
                tol,
                e0,
                finest: plan.finest,
                samples: plan.samples().iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
                alpha: fit.alpha,
                c1: fit.c1,
                beta: fit.beta,
                c2: fit.c2,
                gamma: fit.gamma,
                mean: result.mean(),
                std_error: result.standard_error(),
                variance: result.estimate.variance[k],
                bias: result.bias,
                predicted_cost: plan.allocation.predicted_cost,
                realized_cost: result.realized_cost,
                mc_cost_estimate: result.mc_cost,
                cost_measure: measure.name().into(),
            };
            upsert(&summary_path, row, |a, b| a.tol == b.tol, |r| -r.tol)?;
            let timing = TimingRow { run: tag.clone(), wall_seconds: total_wall(&result.records) };
            upsert(&timing_path, timing, |a, b| a.run == b.run, |_| 0.0)?;
            println!(
                "tol {tol}: L = {}, m = {:?}, mean {:.6e} +- {:.2e}, cost {:.4e} (MC estimate {:.4e})",
                plan.finest,
                plan.samples(),
                result.mean(),
                result.standard_error(),
                result.realized_cost,
                result.mc_cost
            );
        }
        Ok(())
    }

    pub fn mc(&self) -> Result<(), CliError> {
        let pde = self.sampler()?;
        let pool = SamplePool::new(self.workers)?;
        let tol = self.tols[0];
        let tag = mc_tag(tol);
        let log = self.open_log(&[&tag])?;
        let measure = self.cfg.cost_measure()?;
        let k = self.target(&pde)?;
        let fixed_level = self.level.or(self.cfg.mc.level);
        let (level, samples) = match (fixed_level, self.cfg.mc.samples) {
            (Some(l), Some(m)) => (l, m),
            (l, m) => {
                let screening = self.screening(&log, &pde, &pool, self.cfg.screen.levels)?;
                let e0 = screening.e0(k);
                let level = match l {
                    Some(l) => l,
                    None => {
                        let fit = match self.cfg.mlmc.rates {
                            Some(r) => r.to_fit(brine_mlmc::mlmc::COST_DIMENSION),
                            None => screening.fit(k, measure)?,
                        };
                        choose_levels(tol, e0, fit.alpha, fit.c1, self.cfg.l_max())
                    }
                };
                let samples = match m {
                    Some(m) => m,
                    None => {
                        let s = screening.summaries(k, measure)?;
                        let var = s.iter().find(|s| s.level == level).map(|s| s.var_fine).ok_or_else(|| {
                            CliError::Usage(format!("level {level} was not screened; set mc.samples"))
                        })?;
                        ((2.0 * var / (tol * tol * e0 * e0)).ceil() as usize).max(2)
                    }
                };
                (level, samples)
            }
        };
        if level > self.hierarchy.max_level() {
            return Err(CliError::Usage(format!("level {level} exceeds mesh.max_level")));
        }
        eprintln!("{tag}: level {level}, {samples} samples");
        let logged = log.sampler(&pde, &tag)?;
        let result = run_mc(&logged, &pool, &self.sampling(&tag), level, samples, measure, &progress(&tag))?;
        let dir = self.out.join("mc");
        self.write_estimates(&pde, &dir.join(tol_dir(tol)), &result.estimate)?;
        let row = McSummaryRow {
            tol,
            level,
            samples,
            mean: result.estimate.mean[k],
            std_error: result.estimate.estimator_variance[k].sqrt(),
            variance: result.estimate.variance[k],
            realized_cost: result.realized_cost,
            cost_measure: measure.name().into(),
        };
        println!(
            "tol {tol}: level {level}, {samples} samples, mean {:.6e} +- {:.2e}, cost {:.4e}",
            row.mean, row.std_error, row.realized_cost
        );
        upsert(&dir.join("summary.csv"), row, |a, b| a.tol == b.tol, |r| -r.tol)?;
        let timing = TimingRow { run: tag.clone(), wall_seconds: total_wall(std::slice::from_ref(&result.records)) };
        upsert(&dir.join("timing.csv"), timing, |a, b| a.run == b.run, |_| 0.0)?;
        Ok(())
    }

    /// Scalar estimates and field statistics of every output block.
    fn write_estimates(&self, pde: &PdeSampler<'_>, dir: &Path, est: &Estimate) -> Result<(), CliError> {
        let mut scalars = Vec::new();
        for b in pde.layout() {
            if b.len == 1 {
                scalars.push(EstimateRow {
                    qoi: b.id.clone(),
                    time: b.time,
                    mean: est.mean[b.offset],
                    variance: est.variance[b.offset],
                    std_error: est.estimator_variance[b.offset].sqrt(),
                });
                continue;
            }
            let reference = pde.qois.iter().find_map(|q| match q.kind {
                QoiKind::Field { reference_level } if q.id == b.id => Some(reference_level),
                _ => None,
            });
            let points = pde.field_points(reference.unwrap_or(0));
            let rows: Vec<FieldStatRow> = (0..b.len)
                .map(|s| FieldStatRow {
                    slot: s,
                    x: points[s].x,
                    y: points[s].y,
                    mean: est.mean[b.offset + s],
                    variance: est.variance[b.offset + s],
                })
                .collect();
            write_csv(&dir.join(format!("field_{}_t{}.csv", b.id, b.time)), &rows)?;
        }
        write_csv(&dir.join("estimates.csv"), &scalars)
    }
}

/// Replace the row matching `row` (or add it) and keep the file sorted by `order`.
fn upsert<T>(path: &Path, row: T, same: impl Fn(&T, &T) -> bool, order: impl Fn(&T) -> f64) -> Result<(), CliError>
where
    T: serde::Serialize + serde::de::DeserializeOwned,
{
    let mut rows: Vec<T> = read_csv(path)?.unwrap_or_default();
    rows.retain(|r| !same(r, &row));
    rows.push(row);
    rows.sort_by(|a, b| order(a).total_cmp(&order(b)));
    write_csv(path, &rows)
}
