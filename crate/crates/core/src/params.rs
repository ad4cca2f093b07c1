//! Material laws and the stochastic parameter model.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Constants of the deterministic model problem.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalConstants {
    /// Molecular diffusion `D0` [m^2/s].
    pub d0: f64,
    /// Gravity magnitude [m/s^2], acting in `-y`.
    pub gravity: f64,
    /// Viscosity [kg/(m s)].
    pub viscosity: f64,
    /// Density of fresh water [kg/m^3].
    pub rho0: f64,
    /// Density of brine [kg/m^3].
    pub rho1: f64,
    /// Porosity inside the fracture.
    pub phi_f: f64,
    /// Permeability of the fracture [m^2].
    pub k_f: f64,
    /// Kozeny-Carman prefactor [m^2].
    pub kappa_kc: f64,
    /// Exponent `e` in the denominator `1 - phi^e` of the Kozeny-Carman law.
    pub kozeny_exponent: i32,
    /// Total simulated time [s].
    pub t_end: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            d0: 18.8571e-6,
            gravity: 9.8,
            viscosity: 1e-3,
            rho0: 1000.0,
            rho1: 1025.0,
            phi_f: 0.7,
            k_f: 1.019368e-6,
            kappa_kc: 1.5455e-8,
            kozeny_exponent: 1,
            t_end: 6016.0,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("D0", self.d0),
            ("g", self.gravity),
            ("mu", self.viscosity),
            ("rho0", self.rho0),
            ("K_f", self.k_f),
            ("kappa_KC", self.kappa_kc),
            ("T", self.t_end),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::ParameterRange { name, value });
            }
        }
        if !(self.rho1 > self.rho0) {
            return Err(Error::ParameterRange { name: "rho1", value: self.rho1 });
        }
        if !(self.phi_f > 0.0 && self.phi_f < 1.0) {
            return Err(Error::ParameterRange { name: "phi_f", value: self.phi_f });
        }
        if !matches!(self.kozeny_exponent, 1 | 2) {
            return Err(Error::ParameterRange {
                name: "kozeny_exponent",
                value: self.kozeny_exponent as f64,
            });
        }
        Ok(())
    }

    /// Linear density law `rho(c) = rho0 + (rho1 - rho0) c`.
    pub fn density(&self, c: f64) -> f64 {
        self.rho0 + (self.rho1 - self.rho0) * c
    }

    /// `d rho / d c`.
    pub fn density_slope(&self) -> f64 {
        self.rho1 - self.rho0
    }

    /// Kozeny-Carman-like law `K = kappa phi^3 / (1 - phi^e)`.
    pub fn permeability_from_porosity(&self, phi: f64) -> Result<f64> {
        if !(phi > 0.0 && phi < 1.0) {
            return Err(Error::ParameterRange { name: "porosity", value: phi });
        }
        Ok(self.kappa_kc * phi.powi(3) / (1.0 - phi.powi(self.kozeny_exponent)))
    }

    /// Gravity vector `(0, -g)`.
    pub fn gravity_vector(&self) -> [f64; 2] {
        [0.0, -self.gravity]
    }

    /// Hydrostatic brine pressure `-rho1 g y` on the seaward boundary.
    pub fn hydrostatic_pressure(&self, y: f64) -> f64 {
        -self.rho1 * self.gravity * y
    }
}

/// Amplitudes of the stochastic model.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticModel {
    /// Maximal fracture width [m].
    pub aperture_max: f64,
    /// Ratio of minimal to maximal width.
    pub aperture_ratio: f64,
    /// Mean recharge [kg/(m^2 s)].
    pub recharge_mean: f64,
    /// Relative amplitude of the random recharge factor.
    pub recharge_amplitude: f64,
    /// Relative amplitude of the periodic recharge factor; zero disables time dependence.
    pub recharge_time_amplitude: f64,
    /// Recharge period [s].
    pub recharge_period: f64,
    pub porosity_mean: f64,
    pub porosity_amplitude: f64,
}

impl Default for StochasticModel {
    fn default() -> Self {
        StochasticModel {
            aperture_max: 0.01,
            aperture_ratio: 0.01,
            recharge_mean: 3.3e-6,
            recharge_amplitude: 0.1,
            recharge_time_amplitude: 0.1,
            recharge_period: 80.0,
            porosity_mean: 0.35,
            porosity_amplitude: 0.02,
        }
    }
}

fn check_xi(name: &'static str, xi: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&xi) {
        Ok(())
    } else {
        Err(Error::ParameterRange { name, value: xi })
    }
}

impl StochasticModel {
    /// Fracture width `eps(xi1)`, affine from `ratio * max` at -1 to `max` at 1.
    pub fn fracture_width(&self, xi1: f64) -> Result<f64> {
        check_xi("xi1", xi1)?;
        let r = self.aperture_ratio;
        Ok(self.aperture_max * ((1.0 - r) * xi1 + (1.0 + r)) / 2.0)
    }

    /// Recharge mass flux density at time `t`.
    pub fn recharge(&self, t: f64, xi3: f64) -> f64 {
        self.recharge_mean
            * (1.0 + self.recharge_amplitude * xi3)
            * (1.0 + self.recharge_time_amplitude * (2.0 * PI * t / self.recharge_period).sin())
    }

    /// Porosity field `phi_m(x, y)`.
    pub fn porosity(&self, x: f64, y: f64, xi2: f64) -> f64 {
        let pert = xi2 * (PI * x / 2.0).cos() + xi2 * (2.0 * PI * y).sin();
        self.porosity_mean * (1.0 + self.porosity_amplitude * pert)
    }
}

/// The random vector driving one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub xi: [f64; 3],
    pub provenance: Option<Provenance>,
}

/// Where a sample point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub level: usize,
    pub index: usize,
    pub root_seed: u64,
}

impl SamplePoint {
    pub fn new(xi: [f64; 3]) -> Result<Self> {
        for (name, &v) in ["xi1", "xi2", "xi3"].iter().zip(&xi) {
            check_xi(name, v)?;
        }
        Ok(SamplePoint { xi, provenance: None })
    }

    pub fn deterministic() -> Self {
        SamplePoint { xi: [0.0; 3], provenance: None }
    }
}

/// Material fields of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFields {
    pub constants: PhysicalConstants,
    pub model: StochasticModel,
    pub xi: [f64; 3],
    /// Fracture width [m].
    pub epsilon: f64,
}

impl ScenarioFields {
    pub fn porosity(&self, x: f64, y: f64) -> f64 {
        self.model.porosity(x, y, self.xi[1])
    }

    pub fn permeability(&self, x: f64, y: f64) -> f64 {
        let phi = self.porosity(x, y);
        self.constants.kappa_kc * phi.powi(3) / (1.0 - phi.powi(self.constants.kozeny_exponent))
    }

    pub fn recharge(&self, t: f64) -> f64 {
        self.model.recharge(t, self.xi[2])
    }

    /// Bulk diffusion coefficient `phi_m D0`.
    pub fn bulk_diffusion(&self, x: f64, y: f64) -> f64 {
        self.porosity(x, y) * self.constants.d0
    }

    /// Fracture diffusion coefficient `phi_f D0`.
    pub fn fracture_diffusion(&self) -> f64 {
        self.constants.phi_f * self.constants.d0
    }

    /// Normal permeability of the fracture-matrix interface.
    pub fn normal_permeability(&self, x: f64, y: f64) -> f64 {
        self.permeability(x, y)
    }

    /// Normal diffusion coefficient of the fracture-matrix interface.
    pub fn normal_diffusion(&self, x: f64, y: f64) -> f64 {
        self.bulk_diffusion(x, y)
    }
}

/// Derive the material fields for `sample`.
pub fn build_scenario(
    sample: &SamplePoint,
    constants: &PhysicalConstants,
    model: &StochasticModel,
) -> Result<ScenarioFields> {
    constants.validate()?;
    for (name, &v) in ["xi1", "xi2", "xi3"].iter().zip(&sample.xi) {
        check_xi(name, v)?;
    }
    let epsilon = model.fracture_width(sample.xi[0])?;
    if !(epsilon > 0.0) {
        return Err(Error::ParameterRange { name: "epsilon", value: epsilon });
    }
    // Extremes of the porosity perturbation over the domain are |xi2| * 2.
    let spread = model.porosity_mean * model.porosity_amplitude * 2.0 * sample.xi[1].abs();
    let (lo, hi) = (model.porosity_mean - spread, model.porosity_mean + spread);
    if !(lo > 0.0 && hi < 1.0) {
        return Err(Error::ParameterRange { name: "porosity", value: if lo <= 0.0 { lo } else { hi } });
    }
    let q_min = model.recharge_mean
        * (1.0 + model.recharge_amplitude * sample.xi[2])
        * (1.0 - model.recharge_time_amplitude.abs());
    if !(q_min > 0.0) {
        return Err(Error::ParameterRange { name: "recharge", value: q_min });
    }
    Ok(ScenarioFields {
        constants: constants.clone(),
        model: model.clone(),
        xi: sample.xi,
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn density_endpoints() {
        let c = PhysicalConstants::default();
        assert_eq!(c.density(0.0), 1000.0);
        assert_eq!(c.density(1.0), 1025.0);
        assert_eq!(c.density(0.5), 1012.5);
    }

    #[test]
    fn kozeny_carman_variants() {
        let mut c = PhysicalConstants::default();
        // 1.5455e-8 * 0.042875 / 0.65
        let k1 = 1.5455e-8 * 0.042875 / 0.65;
        assert_relative_eq!(c.permeability_from_porosity(0.35).unwrap(), k1, max_relative = 1e-14);
        assert_relative_eq!(k1, 1.019368e-9, max_relative = 1e-3);
        c.kozeny_exponent = 2;
        // 1.5455e-8 * 0.042875 / 0.8775
        assert_relative_eq!(c.permeability_from_porosity(0.35).unwrap(), 7.5514e-10, max_relative = 1e-4);
        assert!(c.permeability_from_porosity(0.0).is_err());
        assert!(c.permeability_from_porosity(1.0).is_err());
        assert!(c.permeability_from_porosity(1e-6).unwrap() < 1e-24);
    }

    #[test]
    fn width_recharge_porosity() {
        let m = StochasticModel::default();
        assert_relative_eq!(m.fracture_width(0.0).unwrap(), 5.05e-3, max_relative = 1e-14);
        assert_relative_eq!(m.fracture_width(1.0).unwrap(), 1e-2, max_relative = 1e-14);
        assert_relative_eq!(m.fracture_width(-1.0).unwrap(), 1e-4, max_relative = 1e-12);
        assert!(m.fracture_width(1.5).is_err());
        assert_eq!(m.recharge(0.0, 0.0), 3.3e-6);
        assert_relative_eq!(m.recharge(20.0, 0.0), 3.63e-6, max_relative = 1e-14);
        assert_relative_eq!(m.recharge(0.0, -1.0), 2.97e-6, max_relative = 1e-14);
        assert_eq!(m.porosity(0.3, -0.2, 0.0), 0.35);
        assert_relative_eq!(m.porosity(0.0, -0.75, 1.0), 0.364, max_relative = 1e-14);
        assert_relative_eq!(m.porosity(1.0, -0.25, 1.0), 0.343, max_relative = 1e-14);
    }

    #[test]
    fn deterministic_scenario() {
        let s = build_scenario(&SamplePoint::deterministic(), &PhysicalConstants::default(), &StochasticModel::default()).unwrap();
        assert_relative_eq!(s.epsilon, 5.05e-3, max_relative = 1e-14);
        assert_relative_eq!(s.permeability(0.4, -0.3), 1.019368e-9, max_relative = 1e-3);
        assert_eq!(s.normal_permeability(0.4, -0.3), s.permeability(0.4, -0.3));
    }

    #[test]
    fn porosity_minimum_on_domain() {
        let m = StochasticModel::default();
        let mut min = f64::MAX;
        for i in 0..=400 {
            for j in 0..=400 {
                min = min.min(m.porosity(2.0 * i as f64 / 400.0, -(j as f64) / 400.0, 1.0));
            }
        }
        assert!(min >= 0.336 - 1e-12, "{min}");
        assert!(min < 0.337);
    }

    proptest! {
        #[test]
        fn density_is_affine(a in -1.0f64..2.0, b in -1.0f64..2.0) {
            let c = PhysicalConstants::default();
            let lhs = c.density((a + b) / 2.0);
            let rhs = (c.density(a) + c.density(b)) / 2.0;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
        }

        #[test]
        fn permeability_monotone(p in 0.01f64..0.98, dp in 1e-4f64..0.01, e in 1i32..=2) {
            let c = PhysicalConstants { kozeny_exponent: e, ..Default::default() };
            prop_assert!(c.permeability_from_porosity(p + dp).unwrap() > c.permeability_from_porosity(p).unwrap());
        }

        #[test]
        fn recharge_periodic(t in 0.0f64..10000.0, xi in -1.0f64..1.0) {
            let m = StochasticModel::default();
            let (a, b) = (m.recharge(t + 80.0, xi), m.recharge(t, xi));
            prop_assert!((a - b).abs() <= 1e-12 * b);
            prop_assert!(b > 0.0);
        }

        #[test]
        fn scenario_deterministic(x1 in -1.0f64..1.0, x2 in -1.0f64..1.0, x3 in -1.0f64..1.0, x in 0.0f64..2.0, y in -1.0f64..0.0) {
            let s = SamplePoint::new([x1, x2, x3]).unwrap();
            let c = PhysicalConstants::default();
            let m = StochasticModel::default();
            let a = build_scenario(&s, &c, &m).unwrap();
            let b = build_scenario(&s, &c, &m).unwrap();
            prop_assert_eq!(a.permeability(x, y).to_bits(), b.permeability(x, y).to_bits());
            prop_assert!(a.porosity(x, y) >= 0.35 * 0.96 - 1e-15 && a.porosity(x, y) <= 0.35 * 1.04 + 1e-15);
            prop_assert!(a.epsilon >= 1e-4 - 1e-18 && a.epsilon <= 1e-2 + 1e-18);
        }
    }
}
