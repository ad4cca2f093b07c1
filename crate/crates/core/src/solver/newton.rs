use std::time::Instant;

use crate::error::{Error, Result};
use crate::sparse::{norm2, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub absolute_tolerance: f64,
    pub relative_tolerance: f64,
    pub max_iterations: usize,
    pub line_search_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            absolute_tolerance: 1e-10,
            relative_tolerance: 1e-8,
            max_iterations: 20,
            line_search_halvings: 4,
        }
    }
}

/// A nonlinear system `F(u) = 0` with a Jacobian.
pub trait NonlinearSystem {
    fn residual(&mut self, u: &[f64]) -> Result<Vec<f64>>;
    /// Residual and Jacobian at `u`.
    fn linearize(&mut self, u: &[f64]) -> Result<(Vec<f64>, CsrMatrix)>;
}

/// Solver for the Newton correction equation.
pub trait LinearSolver {
    /// Solve `a x = b`, returning `x` and the iteration count.
    fn solve(&mut self, a: CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, usize)>;
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    pub newton_iterations: usize,
    /// Linear iterations of each Newton step.
    pub krylov_iterations: Vec<usize>,
    pub initial_residual: f64,
    pub final_residual: f64,
    /// Residual norm after each accepted iterate, starting with the initial one.
    pub residual_history: Vec<f64>,
    pub wall_seconds: f64,
}

/// Damped Newton iteration; `u` is updated in place.
pub fn newton_solve(
    system: &mut dyn NonlinearSystem,
    linear: &mut dyn LinearSolver,
    u: &mut [f64],
    cfg: &NewtonConfig,
) -> Result<SolveReport> {
    let start = Instant::now();
    let mut norm = norm2(&system.residual(u)?);
    let mut report = SolveReport { initial_residual: norm, residual_history: vec![norm], ..Default::default() };
    let target = cfg.absolute_tolerance.max(cfg.relative_tolerance * norm);
    let mut trial = vec![0.0; u.len()];
    while norm > cfg.absolute_tolerance && (report.newton_iterations == 0 || norm > target) {
        if report.newton_iterations == cfg.max_iterations {
            return Err(Error::NewtonFailed { iterations: report.newton_iterations, residual: norm });
        }
        let (r, jac) = system.linearize(u)?;
        let (du, its) = linear.solve(jac, &r)?;
        report.krylov_iterations.push(its);
        report.newton_iterations += 1;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.line_search_halvings {
            for i in 0..u.len() {
                trial[i] = u[i] - lambda * du[i];
            }
            match system.residual(&trial) {
                Ok(rt) => {
                    let nt = norm2(&rt);
                    if nt <= norm {
                        accepted = Some(nt);
                        break;
                    }
                }
                Err(Error::NonFiniteAssembly { .. }) => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
        }
        let Some(nt) = accepted else {
            return Err(Error::NewtonFailed { iterations: report.newton_iterations, residual: norm });
        };
        u.copy_from_slice(&trial);
        norm = nt;
        report.residual_history.push(norm);
        if norm == 0.0 {
            break;
        }
    }
    report.final_residual = norm;
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::lu::DenseLu;

    struct Direct;

    impl LinearSolver for Direct {
        fn solve(&mut self, a: CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, usize)> {
            Ok((DenseLu::factor(&a.to_dense())?.solve(b), 1))
        }
    }

    struct Square;

    impl NonlinearSystem for Square {
        fn residual(&mut self, u: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![u[0] * u[0] - 4.0])
        }
        fn linearize(&mut self, u: &[f64]) -> Result<(Vec<f64>, CsrMatrix)> {
            Ok((self.residual(u)?, CsrMatrix::from_triplets(1, 1, &[(0, 0, 2.0 * u[0])])))
        }
    }

    struct Affine(CsrMatrix, Vec<f64>);

    impl NonlinearSystem for Affine {
        fn residual(&mut self, u: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.matvec(u).iter().zip(&self.1).map(|(a, b)| a - b).collect())
        }
        fn linearize(&mut self, u: &[f64]) -> Result<(Vec<f64>, CsrMatrix)> {
            Ok((self.residual(u)?, self.0.clone()))
        }
    }

    #[test]
    fn square_root_of_four() {
        let mut u = vec![3.0];
        let rep = newton_solve(&mut Square, &mut Direct, &mut u, &NewtonConfig::default()).unwrap();
        assert!((u[0] - 2.0).abs() < 1e-10);
        assert!(rep.newton_iterations <= 8);
        assert!(rep.residual_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn affine_in_one_step() {
        let a = CsrMatrix::from_dense(&[vec![3.0, 1.0], vec![1.0, 2.0]]);
        let mut sys = Affine(a, vec![1.0, 2.0]);
        let mut u = vec![10.0, -4.0];
        let rep = newton_solve(&mut sys, &mut Direct, &mut u, &NewtonConfig::default()).unwrap();
        assert_eq!(rep.newton_iterations, 1);
    }

    #[test]
    fn converged_guess_takes_no_iterations() {
        let mut u = vec![2.0];
        let rep = newton_solve(&mut Square, &mut Direct, &mut u, &NewtonConfig::default()).unwrap();
        assert_eq!(rep.newton_iterations, 0);
    }

    #[test]
    fn iteration_limit_fails() {
        let mut u = vec![1e6];
        let cfg = NewtonConfig { max_iterations: 2, ..Default::default() };
        assert!(matches!(
            newton_solve(&mut Square, &mut Direct, &mut u, &cfg),
            Err(Error::NewtonFailed { iterations: 2, .. })
        ));
    }
}
