use super::MeshLevel;

/// Side of the fracture. `Upper` is side 1, to the left of the tip-to-boundary
/// tangent; `Lower` is side 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Upper,
    Lower,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::Upper => 0,
            Side::Lower => 1,
        }
    }

    pub fn from_index(k: usize) -> Side {
        if k == 0 {
            Side::Upper
        } else {
            Side::Lower
        }
    }
}

/// Slots of one geometric vertex. A slot is a `(c, p)` pair; slot `s` owns
/// DOFs `2s` (mass fraction) and `2s + 1` (pressure).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VertexDofs {
    /// Bulk slots `[upper, lower]`; equal unless the vertex is duplicated.
    pub bulk: [usize; 2],
    pub fracture: Option<usize>,
}

impl VertexDofs {
    pub fn is_duplicated(&self) -> bool {
        self.bulk[0] != self.bulk[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Bulk,
    BulkSide(Side),
    Fracture,
}

/// Degree-of-freedom layout of one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub vertices: Vec<VertexDofs>,
    slot_vertex: Vec<usize>,
    slot_kind: Vec<SlotKind>,
    element_offsets: Vec<usize>,
    element_slots: Vec<usize>,
}

impl DofMap {
    /// Slots ordered by vertex id, then upper, lower, fracture.
    pub fn build(mesh: &MeshLevel) -> DofMap {
        let frac = mesh.fracture.as_ref();
        let mut vertices = Vec::with_capacity(mesh.num_vertices());
        let mut slot_vertex = Vec::new();
        let mut slot_kind = Vec::new();
        let mut push = |v: usize, kind: SlotKind| {
            slot_vertex.push(v);
            slot_kind.push(kind);
            slot_vertex.len() - 1
        };
        for v in 0..mesh.num_vertices() {
            let on_fracture = frac.is_some_and(|f| f.contains(v));
            let is_tip = frac.is_some_and(|f| f.tip() == v);
            let dofs = if !on_fracture {
                let s = push(v, SlotKind::Bulk);
                VertexDofs { bulk: [s, s], fracture: None }
            } else if is_tip {
                let s = push(v, SlotKind::Bulk);
                let f = push(v, SlotKind::Fracture);
                VertexDofs { bulk: [s, s], fracture: Some(f) }
            } else {
                let u = push(v, SlotKind::BulkSide(Side::Upper));
                let l = push(v, SlotKind::BulkSide(Side::Lower));
                let f = push(v, SlotKind::Fracture);
                VertexDofs { bulk: [u, l], fracture: Some(f) }
            };
            vertices.push(dofs);
        }

        let mut element_offsets = vec![0];
        let mut element_slots = Vec::new();
        for e in 0..mesh.num_elements() {
            let side = mesh.element_side(e).unwrap_or(Side::Upper);
            for &v in mesh.elements[e].vertices() {
                element_slots.push(vertices[v].bulk[side.index()]);
            }
            element_offsets.push(element_slots.len());
        }
        DofMap {
            vertices,
            slot_vertex,
            slot_kind,
            element_offsets,
            element_slots,
        }
    }

    pub fn num_slots(&self) -> usize {
        self.slot_vertex.len()
    }

    /// Total number of scalar unknowns `n`.
    pub fn num_dofs(&self) -> usize {
        2 * self.slot_vertex.len()
    }

    pub fn slot_vertex(&self, slot: usize) -> usize {
        self.slot_vertex[slot]
    }

    pub fn slot_kind(&self, slot: usize) -> SlotKind {
        self.slot_kind[slot]
    }

    /// Bulk slots of the element's vertices, on the element's side of the fracture.
    pub fn element_slots(&self, e: usize) -> &[usize] {
        &self.element_slots[self.element_offsets[e]..self.element_offsets[e + 1]]
    }

    /// Bulk slot of vertex `v` on the given side (the shared slot when `None`).
    pub fn bulk_slot(&self, v: usize, side: Option<Side>) -> usize {
        self.vertices[v].bulk[side.unwrap_or(Side::Upper).index()]
    }

    /// Slots touched by one vertex, in order.
    pub fn vertex_slots(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        let d = self.vertices[v];
        let second = d.is_duplicated().then_some(d.bulk[1]);
        std::iter::once(d.bulk[0]).chain(second).chain(d.fracture)
    }
}
