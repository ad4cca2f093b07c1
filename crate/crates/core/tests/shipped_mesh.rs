use std::path::Path;

use brine_mlmc::mesh::{fracture_side, MeshHierarchy, Point, Side};

fn hierarchy(levels: usize) -> MeshHierarchy {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/henry_fracture.mesh");
    MeshHierarchy::load(path, levels).unwrap()
}

#[test]
fn fracture_runs_between_the_model_endpoints() {
    let h = hierarchy(1);
    for level in 0..=1 {
        let mesh = h.level(level);
        let f = mesh.fracture.as_ref().unwrap();
        let tip = mesh.points[f.tip()];
        let end = mesh.points[f.boundary_vertex()];
        assert!(tip.dist(Point::new(1.0, -0.7)) < 1e-12, "{tip:?}");
        assert!(end.dist(Point::new(2.0, -0.5)) < 1e-12, "{end:?}");
        assert!((mesh.fracture_length() - 1.04f64.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn coarse_dofs_are_near_the_reference_scale() {
    let n0 = hierarchy(0).dofs(0).num_dofs() as f64;
    assert!((304.0..=1216.0).contains(&n0), "n0 = {n0}");
}

#[test]
fn dof_growth_approaches_four() {
    let h = hierarchy(3);
    let n: Vec<f64> = (0..=3).map(|l| h.dofs(l).num_dofs() as f64).collect();
    for l in 2..=3 {
        let r = n[l] / n[l - 1];
        assert!((3.8..=4.0).contains(&r), "n{l}/n{} = {r}", l - 1);
    }
}

#[test]
fn first_observation_point_is_below_the_fracture() {
    let h = hierarchy(1);
    let p = Point::new(1.1, -0.8);
    assert_eq!(fracture_side(p), Some(Side::Lower));
    for level in 0..=1 {
        let mesh = h.level(level);
        let loc = mesh.locate_point(p).unwrap();
        assert_eq!(fracture_side(mesh.element_centroid(loc.element)), Some(Side::Lower));
        for p in mesh.element_points(loc.element) {
            assert_ne!(fracture_side(p), Some(Side::Upper));
        }
        assert!((loc.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
