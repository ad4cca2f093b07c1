use super::sampling::{CoupledSample, LevelSampler, SampleCost};
use crate::discretization::{simulate, CostRecord, SimulationConfig, SimulationOutput, TimeGrid};
use crate::error::{Error, Result};
use crate::mesh::{MeshHierarchy, Point};
use crate::params::{build_scenario, PhysicalConstants, SamplePoint, StochasticModel};
use crate::qoi::{QoiKind, QoiSpec};

/// Space-time resolution of one MLMC level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelConfig {
    pub level: usize,
    pub num_dofs: usize,
    pub steps: usize,
    pub tau: f64,
    /// `2^(3 l) n_0 r_0`.
    pub predicted_weight: f64,
}

pub fn level_table(hierarchy: &MeshHierarchy, cfg: &SimulationConfig, t_end: f64) -> Result<Vec<LevelConfig>> {
    let n0 = hierarchy.dofs(0).num_dofs() as f64;
    let r0 = TimeGrid::new(0, cfg.tau0, t_end, cfg.output_interval)?.steps as f64;
    (0..=hierarchy.max_level())
        .map(|l| {
            let t = TimeGrid::new(l, cfg.tau0, t_end, cfg.output_interval)?;
            Ok(LevelConfig {
                level: l,
                num_dofs: hierarchy.dofs(l).num_dofs(),
                steps: t.steps,
                tau: t.tau,
                predicted_weight: (3.0 * l as f64).exp2() * n0 * r0,
            })
        })
        .collect()
}

/// Where one (QoI, time) pair lives in a sample's output vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputBlock {
    pub id: String,
    pub time: f64,
    pub offset: usize,
    /// 1 for scalar QoIs, slots of the reference grid for fields.
    pub len: usize,
}

/// Coupled simulations of the flow problem for a list of QoIs.
pub struct PdeSampler<'a> {
    pub hierarchy: &'a MeshHierarchy,
    pub constants: PhysicalConstants,
    pub model: StochasticModel,
    pub qois: Vec<QoiSpec>,
    pub simulation: SimulationConfig,
    layout: Vec<OutputBlock>,
}

impl<'a> PdeSampler<'a> {
    /// Simulations stop at the latest requested QoI time.
    pub fn new(
        hierarchy: &'a MeshHierarchy,
        constants: PhysicalConstants,
        model: StochasticModel,
        qois: Vec<QoiSpec>,
        simulation: SimulationConfig,
    ) -> Result<Self> {
        constants.validate()?;
        let mut layout = Vec::new();
        let mut offset = 0;
        for q in &qois {
            q.validate()?;
            let len = match q.kind {
                QoiKind::Field { reference_level } => {
                    if reference_level > hierarchy.max_level() {
                        return Err(Error::Invalid(format!("QoI `{}`: no level {reference_level}", q.id)));
                    }
                    hierarchy.dofs(reference_level).num_slots()
                }
                _ => 1,
            };
            let mut times = q.times.clone();
            times.sort_by(f64::total_cmp);
            for time in times {
                layout.push(OutputBlock { id: q.id.clone(), time, offset, len });
                offset += len;
            }
        }
        let simulation = simulation.stopping_after(&qois);
        Ok(PdeSampler { hierarchy, constants, model, qois, simulation, layout })
    }

    pub fn layout(&self) -> &[OutputBlock] {
        &self.layout
    }

    /// Block of QoI `id` at `time`.
    pub fn block(&self, id: &str, time: f64) -> Option<&OutputBlock> {
        self.layout.iter().find(|b| b.id == id && (b.time - time).abs() <= 1e-9 * time.max(1.0))
    }

    /// Coordinates of the reference-grid slots of a field QoI.
    pub fn field_points(&self, reference_level: usize) -> Vec<Point> {
        let mesh = self.hierarchy.level(reference_level);
        let dofs = self.hierarchy.dofs(reference_level);
        (0..dofs.num_slots()).map(|s| mesh.points[dofs.slot_vertex(s)]).collect()
    }

    /// One simulation on `level`, flattened into the output layout.
    pub fn run(&self, level: usize, point: &SamplePoint) -> Result<(Vec<f64>, CostRecord)> {
        let scenario = build_scenario(point, &self.constants, &self.model)?;
        let out = simulate(self.hierarchy, level, &scenario, &self.qois, &self.simulation, None)?;
        Ok((self.flatten(&out)?, out.cost))
    }

    fn flatten(&self, out: &SimulationOutput) -> Result<Vec<f64>> {
        let mut values = Vec::with_capacity(self.layout.last().map_or(0, |b| b.offset + b.len));
        for b in &self.layout {
            let missing = || Error::Invalid(format!("QoI `{}` has no value at {} s", b.id, b.time));
            if b.len == 1 && !out.fields.iter().any(|f| f.id == b.id) {
                let s = out.series.iter().find(|s| s.id == b.id).ok_or_else(missing)?;
                values.push(s.at(b.time).ok_or_else(missing)?);
            } else {
                let f = out
                    .fields
                    .iter()
                    .find(|f| f.id == b.id && (f.time - b.time).abs() <= 1e-9 * b.time.max(1.0))
                    .ok_or_else(missing)?;
                values.extend_from_slice(&f.values);
            }
        }
        Ok(values)
    }
}

fn work(cost: &CostRecord) -> f64 {
    (cost.num_dofs * (cost.newton_iterations + cost.krylov_iterations)) as f64
}

impl LevelSampler for PdeSampler<'_> {
    fn num_outputs(&self) -> usize {
        self.layout.last().map_or(0, |b| b.offset + b.len)
    }

    fn max_level(&self) -> usize {
        self.hierarchy.max_level()
    }

    fn sample(&self, level: usize, point: &SamplePoint, coupled: bool) -> Result<CoupledSample> {
        let (fine, fc) = self.run(level, point)?;
        let (coarse, cc) = if coupled && level > 0 {
            let (c, cc) = self.run(level - 1, point)?;
            (Some(c), cc)
        } else {
            (None, CostRecord::default())
        };
        Ok(CoupledSample {
            fine,
            coarse,
            cost: SampleCost { wall: [fc.wall_seconds, cc.wall_seconds], work: [work(&fc), work(&cc)] },
        })
    }
}
