//! Run configuration read from a TOML file.

use std::path::{Path, PathBuf};

use brine_mlmc::discretization::{DiscretizationConfig, GravityTerm, SimulationConfig};
use brine_mlmc::mesh::Point;
use brine_mlmc::mlmc::{CostMeasure, RateFit};
use brine_mlmc::params::{PhysicalConstants, StochasticModel};
use brine_mlmc::qoi::{BoxQuadrature, QoiKind, QoiSpec, BOX_HALF_WIDTH};
use brine_mlmc::solver::{GmgConfig, KrylovConfig, NewtonConfig, PreconditionerKind};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Output directory, relative to the configuration file.
    pub out: PathBuf,
    pub mesh: MeshSection,
    #[serde(default)]
    pub physics: PhysicsSection,
    #[serde(default)]
    pub stochastic: StochasticSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(rename = "qoi")]
    pub qois: Vec<QoiSection>,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub screen: ScreenSection,
    pub mlmc: MlmcSection,
    #[serde(default)]
    pub mc: McSection,
}

fn default_seed() -> u64 {
    2024
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub path: PathBuf,
    /// Finest level of the hierarchy (`L_max`).
    pub max_level: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub d0: Option<f64>,
    pub gravity: Option<f64>,
    pub viscosity: Option<f64>,
    pub rho0: Option<f64>,
    pub rho1: Option<f64>,
    pub phi_f: Option<f64>,
    pub k_f: Option<f64>,
    pub kappa_kc: Option<f64>,
    pub kozeny_exponent: Option<i32>,
    pub t_end: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticSection {
    pub aperture_max: Option<f64>,
    pub aperture_ratio: Option<f64>,
    pub recharge_mean: Option<f64>,
    pub recharge_amplitude: Option<f64>,
    pub recharge_time_amplitude: Option<f64>,
    pub recharge_period: Option<f64>,
    pub porosity_mean: Option<f64>,
    pub porosity_amplitude: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub tau0: Option<f64>,
    pub output_interval: Option<f64>,
    pub gravity_term: Option<String>,
    pub newton_absolute_tolerance: Option<f64>,
    pub newton_relative_tolerance: Option<f64>,
    pub newton_max_iterations: Option<usize>,
    pub line_search_halvings: Option<usize>,
    pub krylov_tolerance: Option<f64>,
    pub krylov_max_iterations: Option<usize>,
    pub preconditioner: Option<String>,
    pub pre_smoothing: Option<usize>,
    pub post_smoothing: Option<usize>,
    pub max_step_halvings: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QoiSection {
    pub id: String,
    /// `point`, `box`, `box_average` or `field`.
    pub kind: String,
    pub at: Option<[f64; 2]>,
    pub half_width: Option<f64>,
    pub quadrature: Option<String>,
    pub reference_level: Option<usize>,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    #[serde(default)]
    pub level: usize,
    #[serde(default)]
    pub xi: [f64; 3],
    /// Times at which VTK snapshots are written (the final state is always written).
    #[serde(default)]
    pub vtk_times: Vec<f64>,
}

impl Default for SolveSection {
    fn default() -> Self {
        SolveSection { level: 0, xi: [0.0; 3], vtk_times: Vec::new() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenSection {
    #[serde(default = "default_screen_levels")]
    pub levels: usize,
    #[serde(default = "default_screen_samples")]
    pub samples: usize,
}

fn default_screen_levels() -> usize {
    2
}

fn default_screen_samples() -> usize {
    8
}

impl Default for ScreenSection {
    fn default() -> Self {
        ScreenSection { levels: default_screen_levels(), samples: default_screen_samples() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlmcSection {
    /// Scalar QoI the plan is made for.
    pub target: String,
    /// Time of the target value (`t*`).
    pub time: f64,
    pub tol: Vec<f64>,
    /// Cap on `L`; defaults to the mesh hierarchy depth.
    pub max_level: Option<usize>,
    #[serde(default = "default_cost_measure")]
    pub cost_measure: String,
    #[serde(default = "default_failure_budget")]
    pub failure_budget: usize,
    /// Fixed rates instead of the screened ones.
    pub rates: Option<RatesSection>,
}

fn default_cost_measure() -> String {
    "work".into()
}

fn default_failure_budget() -> usize {
    16
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub alpha: f64,
    pub c1: f64,
    pub beta: f64,
    pub c2: f64,
    pub gamma: f64,
    pub c3: f64,
}

impl RatesSection {
    pub fn to_fit(self, d_hat: f64) -> RateFit {
        RateFit {
            alpha: self.alpha,
            c1: self.c1,
            beta: self.beta,
            c2: self.c2,
            gamma: self.gamma,
            c3: self.c3,
            d_hat,
            weak_residuals: Vec::new(),
            strong_residuals: Vec::new(),
            cost_residuals: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    /// Level of the plain Monte Carlo run; defaults to the planned `L`.
    pub level: Option<usize>,
    /// Fixed sample count; defaults to the count meeting the tolerance.
    pub samples: Option<usize>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl RunConfig {
    /// Read and validate; relative paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.mesh.path = base.join(&cfg.mesh.path);
        cfg.out = base.join(&cfg.out);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.workers == 0 {
            return Err(usage("workers must be at least 1"));
        }
        if !self.mesh.path.is_file() {
            return Err(usage(format!("mesh file {} does not exist", self.mesh.path.display())));
        }
        if self.mlmc.tol.iter().any(|t| !(*t > 0.0)) {
            return Err(usage("every tolerance must be positive"));
        }
        self.constants()?;
        self.model();
        self.simulation()?;
        let qois = self.qoi_specs()?;
        let target = qois.iter().find(|q| q.id == self.mlmc.target).ok_or_else(|| usage(format!("unknown target QoI `{}`", self.mlmc.target)))?;
        if target.is_field() || !target.times.iter().any(|&t| (t - self.mlmc.time).abs() <= 1e-9 * t.max(1.0)) {
            return Err(usage(format!("target `{}` must be a scalar QoI evaluated at {} s", target.id, self.mlmc.time)));
        }
        self.cost_measure()?;
        Ok(())
    }

    pub fn constants(&self) -> Result<PhysicalConstants, CliError> {
        let mut c = PhysicalConstants::default();
        let p = &self.physics;
        for (slot, v) in [
            (&mut c.d0, p.d0),
            (&mut c.gravity, p.gravity),
            (&mut c.viscosity, p.viscosity),
            (&mut c.rho0, p.rho0),
            (&mut c.rho1, p.rho1),
            (&mut c.phi_f, p.phi_f),
            (&mut c.k_f, p.k_f),
            (&mut c.kappa_kc, p.kappa_kc),
            (&mut c.t_end, p.t_end),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if let Some(e) = p.kozeny_exponent {
            c.kozeny_exponent = e;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn model(&self) -> StochasticModel {
        let mut m = StochasticModel::default();
        let s = &self.stochastic;
        for (slot, v) in [
            (&mut m.aperture_max, s.aperture_max),
            (&mut m.aperture_ratio, s.aperture_ratio),
            (&mut m.recharge_mean, s.recharge_mean),
            (&mut m.recharge_amplitude, s.recharge_amplitude),
            (&mut m.recharge_time_amplitude, s.recharge_time_amplitude),
            (&mut m.recharge_period, s.recharge_period),
            (&mut m.porosity_mean, s.porosity_mean),
            (&mut m.porosity_amplitude, s.porosity_amplitude),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        m
    }

    pub fn simulation(&self) -> Result<SimulationConfig, CliError> {
        let s = &self.simulation;
        let d = SimulationConfig::default();
        let gravity_term = match &s.gravity_term {
            None => GravityTerm::default(),
            Some(g) => GravityTerm::parse(g).ok_or_else(|| usage(format!("unknown gravity_term `{g}`")))?,
        };
        let preconditioner = match &s.preconditioner {
            None => PreconditionerKind::default(),
            Some(p) => PreconditionerKind::parse(p).ok_or_else(|| usage(format!("unknown preconditioner `{p}`")))?,
        };
        Ok(SimulationConfig {
            tau0: s.tau0.unwrap_or(d.tau0),
            output_interval: s.output_interval.unwrap_or(d.output_interval),
            stop_time: None,
            newton: NewtonConfig {
                absolute_tolerance: s.newton_absolute_tolerance.unwrap_or(d.newton.absolute_tolerance),
                relative_tolerance: s.newton_relative_tolerance.unwrap_or(d.newton.relative_tolerance),
                max_iterations: s.newton_max_iterations.unwrap_or(d.newton.max_iterations),
                line_search_halvings: s.line_search_halvings.unwrap_or(d.newton.line_search_halvings),
            },
            krylov: KrylovConfig {
                tolerance: s.krylov_tolerance.unwrap_or(d.krylov.tolerance),
                max_iterations: s.krylov_max_iterations.unwrap_or(d.krylov.max_iterations),
                preconditioner,
            },
            gmg: GmgConfig {
                pre_smoothing: s.pre_smoothing.unwrap_or(d.gmg.pre_smoothing),
                post_smoothing: s.post_smoothing.unwrap_or(d.gmg.post_smoothing),
            },
            max_step_halvings: s.max_step_halvings.unwrap_or(d.max_step_halvings),
            discretization: DiscretizationConfig { gravity_term },
            record_balance: false,
        })
    }

    pub fn qoi_specs(&self) -> Result<Vec<QoiSpec>, CliError> {
        let mut ids = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for q in &self.qois {
            if !ids.insert(q.id.as_str()) {
                return Err(usage(format!("duplicate QoI id `{}`", q.id)));
            }
            if q.id.contains(['#', ',', '"']) {
                return Err(usage(format!("QoI id `{}` may not contain `#`, `,` or quotes", q.id)));
            }
            let at = || q.at.map(|[x, y]| Point::new(x, y)).ok_or_else(|| usage(format!("QoI `{}` needs `at`", q.id)));
            let quadrature = match &q.quadrature {
                None => BoxQuadrature::default(),
                Some(s) => BoxQuadrature::parse(s).ok_or_else(|| usage(format!("unknown quadrature `{s}`")))?,
            };
            let half_width = q.half_width.unwrap_or(BOX_HALF_WIDTH);
            let kind = match q.kind.as_str() {
                "point" => QoiKind::Point(at()?),
                "box" => QoiKind::Box { center: at()?, half_width, weighted: true, quadrature },
                "box_average" => QoiKind::Box { center: at()?, half_width, weighted: false, quadrature },
                "field" => QoiKind::Field {
                    reference_level: q.reference_level.unwrap_or(self.mesh.max_level),
                },
                k => return Err(usage(format!("unknown QoI kind `{k}`"))),
            };
            let spec = QoiSpec { id: q.id.clone(), kind, times: q.times.clone() };
            spec.validate()?;
            out.push(spec);
        }
        if out.is_empty() {
            return Err(usage("no QoIs configured"));
        }
        Ok(out)
    }

    pub fn cost_measure(&self) -> Result<CostMeasure, CliError> {
        Ok(CostMeasure::parse(&self.mlmc.cost_measure)?)
    }

    pub fn l_max(&self) -> usize {
        self.mlmc.max_level.unwrap_or(self.mesh.max_level).min(self.mesh.max_level)
    }
}
