use super::{fracture_side, DofMap, MeshLevel, Side, SlotKind, VertexParent};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Interpolation from the DOFs of a grid to the DOFs of its refinement.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    /// Slot-level weights, `fine slots x coarse slots`.
    slots: CsrMatrix,
    /// DOF-level prolongation (`c` and `p` interpolated independently).
    prolongation: CsrMatrix,
}

impl TransferOperator {
    pub fn prolongation(&self) -> &CsrMatrix {
        &self.prolongation
    }

    pub fn slot_weights(&self) -> &CsrMatrix {
        &self.slots
    }

    /// Interpolate a coarse DOF vector to the fine grid.
    pub fn apply(&self, coarse: &[f64]) -> Vec<f64> {
        self.prolongation.matvec(coarse)
    }

    /// Interpolate a per-slot field (one value per slot).
    pub fn apply_slots(&self, coarse: &[f64]) -> Vec<f64> {
        self.slots.matvec(coarse)
    }

    /// Transpose application, `P^T r`.
    pub fn restrict(&self, fine: &[f64]) -> Vec<f64> {
        self.prolongation.matvec_transpose(fine)
    }
}

/// Build the interpolation from `coarse` to `fine = coarse.refine()`.
pub fn build_transfer(
    coarse: &MeshLevel,
    coarse_dofs: &DofMap,
    fine: &MeshLevel,
    fine_dofs: &DofMap,
) -> Result<TransferOperator> {
    let rec = fine.refinement.as_ref().ok_or(Error::NotRefinement)?;
    if rec.parent_vertices != coarse.num_vertices()
        || rec.parent_elements != coarse.num_elements()
        || rec.vertex_parents.len() != fine.num_vertices()
    {
        return Err(Error::NotRefinement);
    }
    let mut triplets = Vec::new();
    for v in 0..fine.num_vertices() {
        let (parents, w): (&[usize], f64) = match &rec.vertex_parents[v] {
            VertexParent::Vertex(u) => (std::slice::from_ref(u), 1.0),
            VertexParent::Edge(e) => (e, 0.5),
            VertexParent::Center(c) => (c, 0.25),
        };
        if let VertexParent::Vertex(u) = rec.vertex_parents[v] {
            if coarse.points[u] != fine.points[v] {
                return Err(Error::NotRefinement);
            }
        }
        // Side of the fine vertex, used for parents that are duplicated.
        let own_side = fracture_side(fine.points[v]);
        for s in fine_dofs.vertex_slots(v) {
            match fine_dofs.slot_kind(s) {
                SlotKind::Fracture => {
                    for &u in parents {
                        let f = coarse_dofs.vertices[u].fracture.ok_or(Error::NotRefinement)?;
                        triplets.push((s, f, w));
                    }
                }
                kind => {
                    let side = match kind {
                        SlotKind::BulkSide(side) => side,
                        _ => own_side.unwrap_or(Side::Upper),
                    };
                    for &u in parents {
                        triplets.push((s, coarse_dofs.vertices[u].bulk[side.index()], w));
                    }
                }
            }
        }
    }
    let slots = CsrMatrix::from_triplets(fine_dofs.num_slots(), coarse_dofs.num_slots(), &triplets);
    let dof_triplets: Vec<_> = triplets
        .iter()
        .flat_map(|&(i, j, w)| [(2 * i, 2 * j, w), (2 * i + 1, 2 * j + 1, w)])
        .collect();
    let prolongation = CsrMatrix::from_triplets(fine_dofs.num_dofs(), coarse_dofs.num_dofs(), &dof_triplets);
    Ok(TransferOperator { slots, prolongation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::test_meshes::mapped_grid;

    fn pair() -> (MeshLevel, DofMap, MeshLevel, DofMap, TransferOperator) {
        let c = mapped_grid(4, 2, 2, true);
        let f = c.refine();
        let cd = DofMap::build(&c);
        let fd = DofMap::build(&f);
        let t = build_transfer(&c, &cd, &f, &fd).unwrap();
        (c, cd, f, fd, t)
    }

    #[test]
    fn rows_sum_to_one_and_linears_reproduced() {
        let (c, cd, f, fd, t) = pair();
        let ones = t.apply(&vec![1.0; cd.num_dofs()]);
        assert!(ones.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let lin: Vec<f64> = (0..cd.num_slots()).map(|s| c.points[cd.slot_vertex(s)].x).collect();
        let fine = t.apply_slots(&lin);
        for s in 0..fd.num_slots() {
            assert!((fine[s] - f.points[fd.slot_vertex(s)].x).abs() < 1e-14);
        }
    }

    #[test]
    fn side_jump_preserved() {
        let (_, cd, f, fd, t) = pair();
        let field: Vec<f64> = (0..cd.num_slots())
            .map(|s| match cd.slot_kind(s) {
                SlotKind::BulkSide(Side::Upper) => 1.0,
                SlotKind::BulkSide(Side::Lower) => -1.0,
                SlotKind::Fracture => 5.0,
                SlotKind::Bulk => 0.0,
            })
            .collect();
        let fine = t.apply_slots(&field);
        let frac = f.fracture.as_ref().unwrap();
        for &v in &frac.chain[1..] {
            let d = fd.vertices[v];
            assert_eq!(fine[d.fracture.unwrap()], 5.0);
            // Midpoints of the first fracture edge see the tip's shared slot (0).
            let pos = frac.position(v).unwrap();
            let expect = if pos == 1 { 0.5 } else { 1.0 };
            assert_eq!(fine[d.bulk[0]], expect);
            assert_eq!(fine[d.bulk[1]], -expect);
        }
    }

    #[test]
    fn unrelated_meshes_rejected() {
        let (c, cd, _, _, _) = pair();
        let other = mapped_grid(2, 1, 1, true).refine();
        let od = DofMap::build(&other);
        assert!(matches!(build_transfer(&c, &cd, &other, &od), Err(Error::NotRefinement)));
    }
}
