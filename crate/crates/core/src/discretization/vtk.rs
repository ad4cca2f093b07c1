use std::fmt::Write;

use super::StateVector;
use crate::mesh::{DofMap, Element, MeshLevel, Side};

/// Legacy ASCII VTK unstructured grid with one point per slot.
///
/// Bulk elements reference the slots of their fracture side; fracture edges
/// are written as line cells on the fracture slots. Cell data `side` is 0 away
/// from the fracture, 1 or 2 on either side, and 3 for fracture cells.
pub fn write_vtk(mesh: &MeshLevel, dofs: &DofMap, state: &StateVector) -> String {
    let mut s = String::new();
    let ns = dofs.num_slots();
    writeln!(s, "# vtk DataFile Version 3.0").unwrap();
    writeln!(s, "mass fraction and pressure at t = {} s", state.time).unwrap();
    writeln!(s, "ASCII\nDATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(s, "POINTS {ns} double").unwrap();
    for k in 0..ns {
        let p = mesh.points[dofs.slot_vertex(k)];
        writeln!(s, "{} {} 0", p.x, p.y).unwrap();
    }
    let frac_edges: Vec<[usize; 2]> = mesh.fracture.as_ref().map_or(Vec::new(), |f| f.edges().collect());
    let ncells = mesh.num_elements() + frac_edges.len();
    let size: usize = mesh.elements.iter().map(|e| e.vertices().len() + 1).sum::<usize>() + 3 * frac_edges.len();
    writeln!(s, "CELLS {ncells} {size}").unwrap();
    for e in 0..mesh.num_elements() {
        let slots = dofs.element_slots(e);
        let ids: Vec<String> = slots.iter().map(|v| v.to_string()).collect();
        writeln!(s, "{} {}", slots.len(), ids.join(" ")).unwrap();
    }
    for [a, b] in &frac_edges {
        writeln!(s, "2 {} {}", dofs.vertices[*a].fracture.unwrap(), dofs.vertices[*b].fracture.unwrap()).unwrap();
    }
    writeln!(s, "CELL_TYPES {ncells}").unwrap();
    for e in &mesh.elements {
        let t = match e {
            Element::Triangle(_) => 5,
            Element::Quadrilateral(_) => 9,
        };
        writeln!(s, "{t}").unwrap();
    }
    for _ in &frac_edges {
        writeln!(s, "3").unwrap();
    }
    writeln!(s, "CELL_DATA {ncells}\nSCALARS side int 1\nLOOKUP_TABLE default").unwrap();
    for e in 0..mesh.num_elements() {
        let side = match mesh.element_side(e) {
            None => 0,
            Some(Side::Upper) => 1,
            Some(Side::Lower) => 2,
        };
        writeln!(s, "{side}").unwrap();
    }
    for _ in &frac_edges {
        writeln!(s, "3").unwrap();
    }
    writeln!(s, "POINT_DATA {ns}").unwrap();
    for (name, offset) in [("c", 0), ("p", 1)] {
        writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for k in 0..ns {
            writeln!(s, "{:e}", state.values[2 * k + offset]).unwrap();
        }
    }
    s
}
