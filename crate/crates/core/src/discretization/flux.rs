//! Pointwise flux laws of the bulk, the fracture and their coupling.

use crate::params::PhysicalConstants;

/// Density argument in the buoyancy term of the normal exchange velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GravityTerm {
    /// `rho(c_m^(k)) - rho(c_f)`: matrix-side fluid against fracture fluid.
    #[default]
    MatrixSide,
    /// `rho(c_f) - rho(c_f)`, which vanishes identically.
    AsPrinted,
}

impl GravityTerm {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "matrix_side" => Some(GravityTerm::MatrixSide),
            "as_printed" => Some(GravityTerm::AsPrinted),
            _ => None,
        }
    }
}

/// Darcy velocity `-(K/mu) (grad p - rho g)`.
pub fn darcy_velocity(k: f64, grad_p: [f64; 2], rho: f64, c: &PhysicalConstants) -> [f64; 2] {
    let g = c.gravity_vector();
    let f = -k / c.viscosity;
    [f * (grad_p[0] - rho * g[0]), f * (grad_p[1] - rho * g[1])]
}

/// Normal velocity from the fracture into side `k` across the half aperture.
#[allow(clippy::too_many_arguments)]
pub fn normal_exchange_velocity(
    p_m: f64,
    p_f: f64,
    c_m: f64,
    c_f: f64,
    epsilon: f64,
    k_fn: f64,
    normal: [f64; 2],
    c: &PhysicalConstants,
    term: GravityTerm,
) -> f64 {
    let g = c.gravity_vector();
    let g_n = g[0] * normal[0] + g[1] * normal[1];
    let rho_star = match term {
        GravityTerm::MatrixSide => c.density(c_m),
        GravityTerm::AsPrinted => c.density(c_f),
    };
    -(k_fn / c.viscosity) * ((p_m - p_f) / (0.5 * epsilon) - (rho_star - c.density(c_f)) * g_n)
}

/// Liquid and salt mass flux densities `(Q, P)` from the fracture into side `k`.
pub fn exchange_mass_fluxes(q_fn: f64, c_m: f64, c_f: f64, d_fn: f64, epsilon: f64, c: &PhysicalConstants) -> (f64, f64) {
    let rho = c.density(c_m);
    let c_up = if q_fn < 0.0 { c_m } else { c_f };
    let q = rho * q_fn;
    let p = rho * c_up * q_fn - rho * d_fn * (c_m - c_f) / (0.5 * epsilon);
    (q, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn darcy_example() {
        let c = PhysicalConstants::default();
        // K/mu = 1e-6 with mu = 1e-3.
        let q = darcy_velocity(1e-9, [2.5, c.density(0.0) * -c.gravity], c.density(0.0), &c);
        assert_relative_eq!(q[0], -1e-6 * 2.5, max_relative = 1e-14);
        assert!(q[1].abs() < 1e-18);
    }

    #[test]
    fn normal_velocity_examples() {
        let c = PhysicalConstants::default();
        let q = normal_exchange_velocity(5e-3, 0.0, 0.3, 0.3, 0.01, 1e-9, [1.0, 0.0], &c, GravityTerm::MatrixSide);
        assert_relative_eq!(q, -1e-6, max_relative = 1e-12);
        let back = normal_exchange_velocity(0.0, 5e-3, 0.3, 0.3, 0.01, 1e-9, [1.0, 0.0], &c, GravityTerm::MatrixSide);
        assert_relative_eq!(back, 1e-6, max_relative = 1e-12);
        assert_eq!(normal_exchange_velocity(7.0, 7.0, 0.2, 0.2, 0.01, 1e-9, [0.0, 1.0], &c, GravityTerm::MatrixSide), 0.0);
        // Heavier matrix fluid above the fracture sinks into it.
        let sink = normal_exchange_velocity(0.0, 0.0, 1.0, 0.0, 0.01, 1e-9, [0.0, 1.0], &c, GravityTerm::MatrixSide);
        assert!(sink < 0.0);
        let flat = normal_exchange_velocity(0.0, 0.0, 1.0, 0.0, 0.01, 1e-9, [0.0, 1.0], &c, GravityTerm::AsPrinted);
        assert_eq!(flat, 0.0);
    }

    #[test]
    fn exchange_flux_examples() {
        let c = PhysicalConstants::default();
        let (q, p) = exchange_mass_fluxes(0.0, 1.0, 0.0, 6.6e-6, 0.01, &c);
        assert_eq!(q, 0.0);
        assert_relative_eq!(p, -1025.0 * 6.6e-6 / 0.005, max_relative = 1e-14);
        assert_relative_eq!(p, -1.3530, max_relative = 1e-4);
        // Inflow from the matrix carries the matrix mass fraction.
        let (_, p) = exchange_mass_fluxes(-1e-6, 0.4, 0.9, 0.0, 0.01, &c);
        assert_relative_eq!(p, c.density(0.4) * 0.4 * -1e-6, max_relative = 1e-14);
        assert_eq!(exchange_mass_fluxes(0.0, 0.5, 0.5, 1e-5, 0.01, &c).1, 0.0);
    }
}
