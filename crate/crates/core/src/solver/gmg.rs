use crate::error::Result;
use crate::sparse::CsrMatrix;

use super::ilu::Ilu0;
use super::krylov::Preconditioner;
use super::lu::DenseLu;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GmgConfig {
    pub pre_smoothing: usize,
    pub post_smoothing: usize,
}

impl Default for GmgConfig {
    fn default() -> Self {
        GmgConfig { pre_smoothing: 2, post_smoothing: 2 }
    }
}

struct GmgLevel {
    matrix: CsrMatrix,
    smoother: Option<Ilu0>,
    /// Prolongation from the next coarser level.
    prolongation: Option<CsrMatrix>,
    restriction: Option<CsrMatrix>,
}

/// Multigrid hierarchy for one system matrix, coarsest level first.
pub struct GmgHierarchy {
    levels: Vec<GmgLevel>,
    coarse: DenseLu,
    config: GmgConfig,
}

impl GmgHierarchy {
    /// Build Galerkin coarse operators `P^T A P` below `fine`.
    /// `prolongations[k]` maps level `k` to level `k + 1`; the last one ends at `fine`.
    ///
    /// Unit rows of `A` (prescribed values) get no coarse correction: their rows of
    /// `P` are dropped, and coarse unknowns left without fine support become unit rows.
    pub fn new(fine: CsrMatrix, prolongations: &[&CsrMatrix], config: GmgConfig) -> Result<Self> {
        let nl = prolongations.len() + 1;
        let mut matrices = vec![fine];
        let mut transfers = Vec::with_capacity(prolongations.len());
        for p in prolongations.iter().rev() {
            let a = matrices.last().unwrap();
            let p = without_rows(p, &unit_rows(a));
            let r = p.transpose();
            let coarse = with_unit_empty_rows(r.matmul(&a.matmul(&p)?)?);
            matrices.push(coarse);
            transfers.push((p, r));
        }
        matrices.reverse();
        transfers.reverse();
        let coarse = DenseLu::factor(&matrices[0].to_dense())?;
        let mut levels = Vec::with_capacity(nl);
        let mut transfers = transfers.into_iter();
        for (k, a) in matrices.into_iter().enumerate() {
            let smoother = if k == 0 { None } else { Some(Ilu0::factor_reordered(&a)?) };
            let (prolongation, restriction) = match k {
                0 => (None, None),
                _ => transfers.next().map(|(p, r)| (Some(p), Some(r))).unwrap(),
            };
            levels.push(GmgLevel { matrix: a, smoother, prolongation, restriction });
        }
        Ok(GmgHierarchy { levels, coarse, config })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn matrix(&self, k: usize) -> &CsrMatrix {
        &self.levels[k].matrix
    }

    /// One V-cycle for `A_k x = b` from the initial guess `x`.
    pub fn vcycle(&self, k: usize, b: &[f64], x: &mut [f64]) {
        if k == 0 {
            x.copy_from_slice(&self.coarse.solve(b));
            return;
        }
        let lvl = &self.levels[k];
        let n = b.len();
        let mut r = vec![0.0; n];
        let smoother = lvl.smoother.as_ref().unwrap();
        let smooth = |x: &mut [f64], r: &mut Vec<f64>, sweeps: usize| {
            for _ in 0..sweeps {
                lvl.matrix.matvec_into(x, r);
                for i in 0..n {
                    r[i] = b[i] - r[i];
                }
                smoother.apply_in_place(r);
                for i in 0..n {
                    x[i] += r[i];
                }
            }
        };
        smooth(x, &mut r, self.config.pre_smoothing);
        lvl.matrix.matvec_into(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let rc = lvl.restriction.as_ref().unwrap().matvec(&r);
        let mut ec = vec![0.0; rc.len()];
        self.vcycle(k - 1, &rc, &mut ec);
        let e = lvl.prolongation.as_ref().unwrap().matvec(&ec);
        for i in 0..n {
            x[i] += e[i];
        }
        smooth(x, &mut r, self.config.post_smoothing);
    }
}

/// Rows whose only nonzero is the diagonal.
fn unit_rows(a: &CsrMatrix) -> Vec<bool> {
    (0..a.nrows())
        .map(|i| {
            let mut diagonal = false;
            for (j, v) in a.row(i) {
                if j == i {
                    diagonal = v != 0.0;
                } else if v != 0.0 {
                    return false;
                }
            }
            diagonal
        })
        .collect()
}

fn without_rows(p: &CsrMatrix, drop: &[bool]) -> CsrMatrix {
    let t: Vec<(usize, usize, f64)> =
        (0..p.nrows()).filter(|&i| !drop[i]).flat_map(|i| p.row(i).map(move |(j, v)| (i, j, v))).collect();
    CsrMatrix::from_triplets(p.nrows(), p.ncols(), &t)
}

/// Put a unit diagonal in every row without nonzeros.
fn with_unit_empty_rows(a: CsrMatrix) -> CsrMatrix {
    let empty: Vec<usize> = (0..a.nrows()).filter(|&i| a.row(i).all(|(_, v)| v == 0.0)).collect();
    if empty.is_empty() {
        return a;
    }
    let mut t: Vec<(usize, usize, f64)> = (0..a.nrows()).flat_map(|i| a.row(i).map(move |(j, v)| (i, j, v))).collect();
    t.extend(empty.iter().map(|&i| (i, i, 1.0)));
    CsrMatrix::from_triplets(a.nrows(), a.ncols(), &t)
}

impl Preconditioner for GmgHierarchy {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.iter_mut().for_each(|v| *v = 0.0);
        self.vcycle(self.levels.len() - 1, r, z);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::BoxGeometry;
    use crate::mesh::test_meshes::mapped_grid;
    use crate::mesh::{build_transfer, DofMap, MeshLevel};
    use crate::sparse::norm2;

    /// Box-scheme Laplacian with unit Dirichlet rows on the outer boundary.
    fn poisson(mesh: &MeshLevel) -> CsrMatrix {
        let g = BoxGeometry::new(mesh);
        let mut t = Vec::new();
        for e in 0..mesh.num_elements() {
            let v = mesh.elements[e].vertices();
            for f in &g.elements[e].faces {
                for (a, d) in f.grad.iter().enumerate() {
                    let w = -(d[0] * f.normal[0] + d[1] * f.normal[1]);
                    t.push((v[f.from], v[a], w));
                    t.push((v[f.to], v[a], -w));
                }
            }
        }
        let mut boundary = vec![false; mesh.num_vertices()];
        for b in &mesh.boundary {
            boundary[b.vertices[0]] = true;
            boundary[b.vertices[1]] = true;
        }
        t.retain(|&(i, _, _)| !boundary[i]);
        for (i, &b) in boundary.iter().enumerate() {
            if b {
                t.push((i, i, 1.0));
            }
        }
        let n = mesh.num_vertices();
        CsrMatrix::from_triplets(n, n, &t)
    }

    fn setup() -> (GmgHierarchy, CsrMatrix) {
        let m0 = mapped_grid(4, 2, 2, false);
        let m1 = m0.refine();
        let m2 = m1.refine();
        let d: Vec<DofMap> = [&m0, &m1, &m2].iter().map(|m| DofMap::build(m)).collect();
        let p0 = build_transfer(&m0, &d[0], &m1, &d[1]).unwrap().slot_weights().clone();
        let p1 = build_transfer(&m1, &d[1], &m2, &d[2]).unwrap().slot_weights().clone();
        let a = poisson(&m2);
        (GmgHierarchy::new(a.clone(), &[&p0, &p1], GmgConfig::default()).unwrap(), a)
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let (h, a) = setup();
        let mut z = vec![1.0; a.nrows()];
        h.apply(&vec![0.0; a.nrows()], &mut z);
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn galerkin_identity() {
        let (h, _) = setup();
        // Rebuild A_1 from A_2 and compare.
        let m0 = mapped_grid(4, 2, 2, false);
        let m1 = m0.refine();
        let m2 = m1.refine();
        let p = build_transfer(&m1, &DofMap::build(&m1), &m2, &DofMap::build(&m2)).unwrap();
        let p = without_rows(p.slot_weights(), &unit_rows(h.matrix(2)));
        let expect = with_unit_empty_rows(p.transpose().matmul(&h.matrix(2).matmul(&p).unwrap()).unwrap());
        let got = h.matrix(1);
        assert_eq!(expect.col_idx(), got.col_idx());
        let scale = expect.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (u, v) in expect.values().iter().zip(got.values()) {
            assert!((u - v).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn vcycle_contracts_poisson_residual() {
        let (h, a) = setup();
        let n = a.nrows();
        let b: Vec<f64> = (0..n).map(|i| ((i * 37 % 17) as f64) / 17.0 - 0.3).collect();
        let mut x = vec![0.0; n];
        let mut prev = norm2(&b);
        for _ in 0..5 {
            let r: Vec<f64> = a.matvec(&x).iter().zip(&b).map(|(u, v)| v - u).collect();
            let mut e = vec![0.0; n];
            h.apply(&r, &mut e);
            for i in 0..n {
                x[i] += e[i];
            }
            let rn = norm2(&a.matvec(&x).iter().zip(&b).map(|(u, v)| v - u).collect::<Vec<_>>());
            assert!(rn <= 0.1 * prev, "reduction {}", rn / prev);
            prev = rn;
        }
    }
}
