//! Implicit Euler time stepping of one scenario on one level.

use std::time::Instant;

use super::{Discretization, DiscretizationConfig, MassBalance, StateVector};
use crate::error::{Error, Result};
use crate::mesh::MeshHierarchy;
use crate::params::ScenarioFields;
use crate::qoi::{field_snapshot, FieldSnapshot, PreparedQoi, QoiSeries, QoiSpec};
use crate::solver::{newton_solve, GmgConfig, KrylovConfig, KrylovSolver, NewtonConfig, NonlinearSystem, SolveReport};
use crate::sparse::CsrMatrix;

/// Time grid of one level: `tau = tau0 2^-level`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub tau: f64,
    pub steps: usize,
    pub output_interval: f64,
}

impl TimeGrid {
    pub fn new(level: usize, tau0: f64, t_end: f64, output_interval: f64) -> Result<Self> {
        let tau = tau0 / (1u64 << level) as f64;
        let steps = (t_end / tau).round() as usize;
        let ratio = output_interval / tau;
        if (steps as f64 * tau - t_end).abs() > 1e-9 * t_end || (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::Invalid(format!(
                "time step {tau} s does not divide the end time {t_end} s and output interval {output_interval} s"
            )));
        }
        Ok(TimeGrid { tau, steps, output_interval })
    }

    pub fn end_time(&self) -> f64 {
        self.tau * self.steps as f64
    }

    pub fn step_time(&self, k: usize) -> f64 {
        self.tau * k as f64
    }

    /// Output times `k * output_interval` up to the end time.
    pub fn output_times(&self) -> Vec<f64> {
        let n = (self.end_time() / self.output_interval).round() as usize;
        (1..=n).map(|k| k as f64 * self.output_interval).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Level-0 time step [s].
    pub tau0: f64,
    pub output_interval: f64,
    /// Stop after this time instead of the end time (QoIs beyond it are not evaluated).
    pub stop_time: Option<f64>,
    pub newton: NewtonConfig,
    pub krylov: KrylovConfig,
    pub gmg: GmgConfig,
    /// Recursive halvings of a step whose Newton iteration fails.
    pub max_step_halvings: usize,
    pub discretization: DiscretizationConfig,
    /// Compute the liquid mass balance of every step (one extra flux pass).
    pub record_balance: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            tau0: 32.0,
            output_interval: 64.0,
            stop_time: None,
            newton: NewtonConfig::default(),
            krylov: KrylovConfig::default(),
            gmg: GmgConfig::default(),
            max_step_halvings: 3,
            discretization: DiscretizationConfig::default(),
            record_balance: false,
        }
    }
}

impl SimulationConfig {
    /// Stop at the latest time any of `qois` needs.
    pub fn stopping_after(mut self, qois: &[QoiSpec]) -> Self {
        self.stop_time = qois.iter().flat_map(|q| q.times.iter().copied()).reduce(f64::max);
        self
    }
}

/// Work spent on one simulation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostRecord {
    pub wall_seconds: f64,
    pub steps: usize,
    /// Steps that needed halving.
    pub substepped: usize,
    pub newton_iterations: usize,
    pub krylov_iterations: usize,
    pub num_dofs: usize,
}

impl CostRecord {
    pub fn krylov_per_newton(&self) -> f64 {
        if self.newton_iterations == 0 {
            0.0
        } else {
            self.krylov_iterations as f64 / self.newton_iterations as f64
        }
    }
}

/// What an observer sees after each accepted level step.
pub struct StepReport<'a> {
    pub time: f64,
    pub tau: f64,
    pub state: &'a StateVector,
    pub previous: &'a StateVector,
    pub c_min: f64,
    pub c_max: f64,
    /// Largest change of `c` relative to the largest `|c|`.
    pub relative_change: f64,
    /// Mass balance of each (sub)step, when recorded.
    pub balance: Vec<MassBalance>,
    pub solves: Vec<SolveReport>,
}

pub trait StepObserver {
    fn on_step(&mut self, report: &StepReport<'_>);
}

impl<F: FnMut(&StepReport<'_>)> StepObserver for F {
    fn on_step(&mut self, report: &StepReport<'_>) {
        self(report)
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub series: Vec<QoiSeries>,
    pub fields: Vec<FieldSnapshot>,
    pub cost: CostRecord,
    pub final_state: StateVector,
}

struct Step<'d, 'a> {
    disc: &'d Discretization<'a>,
    old: &'d [f64],
    t_new: f64,
    tau: f64,
}

impl NonlinearSystem for Step<'_, '_> {
    fn residual(&mut self, u: &[f64]) -> Result<Vec<f64>> {
        self.disc.residual(u, self.old, self.t_new, self.tau)
    }

    fn linearize(&mut self, u: &[f64]) -> Result<(Vec<f64>, CsrMatrix)> {
        self.disc.assemble_system(u, self.old, self.t_new, self.tau)
    }
}

/// One implicit Euler step from `old` at `t0` to `t0 + tau`, halving on failure.
fn advance(
    disc: &Discretization<'_>,
    linear: &mut KrylovSolver<'_>,
    cfg: &SimulationConfig,
    old: &[f64],
    t0: f64,
    tau: f64,
    halvings: usize,
    solves: &mut Vec<SolveReport>,
    balance: &mut Vec<MassBalance>,
) -> Result<Vec<f64>> {
    let mut u = old.to_vec();
    disc.impose_dirichlet(&mut u);
    let t_new = t0 + tau;
    let mut step = Step { disc, old, t_new, tau };
    match newton_solve(&mut step, linear, &mut u, &cfg.newton) {
        Ok(rep) => {
            solves.push(rep);
            if cfg.record_balance {
                balance.push(disc.liquid_balance(&u, old, t_new, tau));
            }
            Ok(u)
        }
        Err(e) if e.is_numerical() && halvings < cfg.max_step_halvings => {
            let half = 0.5 * tau;
            let mid = advance(disc, linear, cfg, old, t0, half, halvings + 1, solves, balance)?;
            advance(disc, linear, cfg, &mid, t0 + half, half, halvings + 1, solves, balance)
        }
        Err(e) => Err(Error::StepFailed { time: t_new, halvings, source: Box::new(e) }),
    }
}

/// Run one scenario on simulation `level` and evaluate the QoIs.
pub fn simulate(
    hierarchy: &MeshHierarchy,
    level: usize,
    scenario: &ScenarioFields,
    qois: &[QoiSpec],
    cfg: &SimulationConfig,
    mut observer: Option<&mut dyn StepObserver>,
) -> Result<SimulationOutput> {
    let start = Instant::now();
    if level > hierarchy.max_level() {
        return Err(Error::Invalid(format!("level {level} exceeds the hierarchy ({})", hierarchy.max_level())));
    }
    let mesh = hierarchy.level(level);
    let dofs = hierarchy.dofs(level);
    let time = TimeGrid::new(level, cfg.tau0, scenario.constants.t_end, cfg.output_interval)?;
    let disc = Discretization::new(mesh, dofs, scenario.clone(), cfg.discretization);
    let prepared = qois.iter().map(|q| PreparedQoi::new(q, mesh, dofs)).collect::<Result<Vec<_>>>()?;
    for q in &prepared {
        if let Some(r) = q.reference_level() {
            if r < level || r > hierarchy.max_level() {
                return Err(Error::Invalid(format!("QoI `{}`: reference level {r} unavailable", q.spec.id)));
            }
        }
        for &t in &q.spec.times {
            let k = t / cfg.output_interval;
            if (k - k.round()).abs() > 1e-9 || t <= 0.0 || t > time.end_time() + 1e-9 {
                return Err(Error::Invalid(format!("QoI `{}`: time {t} is not an output time", q.spec.id)));
            }
        }
    }
    let stop = cfg.stop_time.unwrap_or(time.end_time()).min(time.end_time());
    let nsteps = ((stop / time.tau).ceil() as usize).min(time.steps);

    let mut linear = KrylovSolver {
        config: cfg.krylov,
        gmg: cfg.gmg,
        prolongations: (0..hierarchy.grid_index(level)).map(|k| hierarchy.grid_transfer(k).prolongation()).collect(),
    };
    let mut series: Vec<QoiSeries> = prepared
        .iter()
        .filter(|q| !q.spec.is_field())
        .map(|q| QoiSeries { id: q.spec.id.clone(), values: Vec::new() })
        .collect();
    let mut fields = Vec::new();
    let mut cost = CostRecord { num_dofs: dofs.num_dofs(), ..Default::default() };

    let mut state = disc.initial_state();
    for k in 1..=nsteps {
        let t0 = time.step_time(k - 1);
        let mut solves = Vec::new();
        let mut balance = Vec::new();
        let values = advance(&disc, &mut linear, cfg, &state.values, t0, time.tau, 0, &mut solves, &mut balance)?;
        let next = StateVector { values, time: time.step_time(k) };
        cost.steps += 1;
        if solves.len() > 1 {
            cost.substepped += 1;
        }
        for s in &solves {
            cost.newton_iterations += s.newton_iterations;
            cost.krylov_iterations += s.krylov_iterations.iter().sum::<usize>();
        }
        if let Some(obs) = observer.as_deref_mut() {
            let c = next.mass_fractions();
            let (c_min, c_max) = c.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
            let scale = c.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
            let change = c
                .iter()
                .zip(state.values.iter().step_by(2))
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            obs.on_step(&StepReport {
                time: next.time,
                tau: time.tau,
                state: &next,
                previous: &state,
                c_min,
                c_max,
                relative_change: change / scale,
                balance,
                solves,
            });
        }
        state = next;
        let t = state.time;
        let hit = |s: f64| (s - t).abs() <= 1e-9 * t.max(1.0);
        let mut scalar = 0;
        for q in &prepared {
            let due = q.spec.times.iter().any(|&s| hit(s));
            match q.reference_level() {
                None => {
                    if due {
                        let v = q.scalar(&state, &scenario.constants).unwrap();
                        series[scalar].values.push((t, v));
                    }
                    scalar += 1;
                }
                Some(r) => {
                    if due {
                        fields.push(FieldSnapshot {
                            id: q.spec.id.clone(),
                            time: t,
                            reference_level: r,
                            values: field_snapshot(hierarchy, level, r, &state)?,
                        });
                    }
                }
            }
        }
    }
    cost.wall_seconds = start.elapsed().as_secs_f64();
    Ok(SimulationOutput { series, fields, cost, final_state: state })
}
