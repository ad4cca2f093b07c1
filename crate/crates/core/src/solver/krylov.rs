use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, CsrMatrix};

use super::ilu::Ilu0;

/// Approximate inverse applied inside the Krylov iteration.
pub trait Preconditioner {
    /// `z = M^{-1} r`.
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

impl Preconditioner for Ilu0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        self.apply_in_place(z);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PreconditionerKind {
    #[default]
    Gmg,
    Ilu0,
    None,
}

impl PreconditionerKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gmg" => Some(PreconditionerKind::Gmg),
            "ilu0" => Some(PreconditionerKind::Ilu0),
            "none" => Some(PreconditionerKind::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub preconditioner: PreconditionerKind,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig { tolerance: 1e-8, max_iterations: 200, preconditioner: PreconditionerKind::Gmg }
    }
}

/// Right-preconditioned BiCGStab starting from `x = 0`.
/// Returns the solution and the iteration count.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], m: &dyn Preconditioner, cfg: &KrylovConfig) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::Dimension { expected: a.nrows(), got: n });
    }
    if let Some(k) = b.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteAssembly { dof: k });
    }
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let target = cfg.tolerance * bnorm;
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho_prev, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let fail = |reason, iterations, r: &[f64]| Error::KrylovFailed { reason, iterations, residual: norm2(r) / bnorm };

    for it in 1..=cfg.max_iterations {
        let rho = dot(&r_hat, &r);
        if rho.abs() <= 1e-30 * norm2(&r_hat) * norm2(&r) || !rho.is_finite() {
            return Err(fail("breakdown (rho = 0)", it, &r));
        }
        if it == 1 {
            p.copy_from_slice(&r);
        } else {
            let beta = (rho / rho_prev) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }
        m.apply(&p, &mut p_hat);
        a.matvec_into(&p_hat, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            return Err(fail("breakdown (r_hat . v = 0)", it, &r));
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= target {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok((x, it));
        }
        m.apply(&s, &mut s_hat);
        a.matvec_into(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        let rn = norm2(&r);
        if !rn.is_finite() {
            return Err(fail("diverged", it, &r));
        }
        if rn <= target {
            return Ok((x, it));
        }
        if omega == 0.0 {
            return Err(fail("breakdown (omega = 0)", it, &r));
        }
        rho_prev = rho;
    }
    Err(fail("reached the iteration limit", cfg.max_iterations, &r))
}
