//! Newton iteration with BiCGStab on the correction equation, preconditioned
//! by a geometric multigrid V-cycle with ILU(0) smoothing.

mod gmg;
mod ilu;
mod krylov;
mod lu;
mod newton;

pub use gmg::{GmgConfig, GmgHierarchy};
pub use ilu::Ilu0;
pub use krylov::{bicgstab, Identity, KrylovConfig, Preconditioner, PreconditionerKind};
pub use lu::DenseLu;
pub use newton::{newton_solve, LinearSolver, NewtonConfig, NonlinearSystem, SolveReport};

use crate::error::Result;
use crate::sparse::CsrMatrix;

/// BiCGStab with the configured preconditioner, rebuilt for every matrix.
pub struct KrylovSolver<'a> {
    pub config: KrylovConfig,
    pub gmg: GmgConfig,
    /// Prolongations from the coarsest grid up to the system's grid.
    pub prolongations: Vec<&'a CsrMatrix>,
}

impl LinearSolver for KrylovSolver<'_> {
    fn solve(&mut self, a: CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, usize)> {
        match self.config.preconditioner {
            PreconditionerKind::Gmg => {
                let h = GmgHierarchy::new(a, &self.prolongations, self.gmg)?;
                let top = h.matrix(h.num_levels() - 1);
                bicgstab(top, b, &h, &self.config)
            }
            PreconditionerKind::Ilu0 => {
                let m = Ilu0::factor_with_shift(&a)?;
                bicgstab(&a, b, &m, &self.config)
            }
            PreconditionerKind::None => bicgstab(&a, b, &Identity, &self.config),
        }
    }
}
