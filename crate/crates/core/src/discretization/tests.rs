use super::*;
use crate::mesh::test_meshes::mapped_grid;
use crate::mesh::MeshLevel;
use crate::params::{build_scenario, PhysicalConstants, SamplePoint, StochasticModel};
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn level0() -> MeshLevel {
    mapped_grid(10, 2, 4, true).refine()
}

fn scenario(xi: [f64; 3]) -> ScenarioFields {
    build_scenario(&SamplePoint::new(xi).unwrap(), &PhysicalConstants::default(), &StochasticModel::default()).unwrap()
}

fn hydrostatic(disc: &Discretization<'_>, c: f64) -> Vec<f64> {
    let consts = &disc.scenario.constants;
    let mut u = vec![0.0; disc.num_dofs()];
    for s in 0..disc.dofs.num_slots() {
        let y = disc.mesh.points[disc.dofs.slot_vertex(s)].y;
        u[2 * s] = c;
        u[2 * s + 1] = -consts.density(c) * consts.gravity * y;
    }
    u
}

#[test]
fn initial_state_is_fresh_and_hydrostatic() {
    let m = level0();
    let d = DofMap::build(&m);
    let disc = Discretization::new(&m, &d, scenario([0.0; 3]), Default::default());
    let u = disc.initial_state();
    assert!(u.mass_fractions().iter().all(|&c| c == 0.0));
    for s in 0..d.num_slots() {
        let y = m.points[d.slot_vertex(s)].y;
        if y == -1.0 {
            assert_relative_eq!(u.p(s), 10045.0, max_relative = 1e-14);
        }
        if y == 0.0 {
            assert_eq!(u.p(s), 0.0);
        }
    }
}

#[test]
fn hydrostatic_brine_is_steady() {
    let m = level0();
    let d = DofMap::build(&m);
    let mut sc = scenario([0.3, -0.5, 0.2]);
    sc.model.recharge_mean = 0.0;
    let disc = Discretization::new(&m, &d, sc, Default::default());
    let u = hydrostatic(&disc, 1.0);
    let r = disc.residual(&u, &u, 32.0, 32.0).unwrap();
    let scale = disc.flux_scale(&u) / d.num_dofs() as f64;
    let rmax = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(rmax <= 1e-10 * scale, "{rmax} vs {scale}");
    assert!(rmax < 1e-12);
}

#[test]
fn flux_contributions_telescope() {
    let m = level0();
    let d = DofMap::build(&m);
    let mut sc = scenario([0.8, 0.1, 0.0]);
    sc.model.recharge_mean = 0.0;
    let disc = Discretization::new(&m, &d, sc, Default::default());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut u = hydrostatic(&disc, 0.0);
    for s in 0..d.num_slots() {
        u[2 * s] = rng.random_range(0.0..1.0);
        u[2 * s + 1] += rng.random_range(-5.0..5.0);
    }
    let r = disc.raw_residual(&u, &u, 0.0, 0.0);
    let liquid: f64 = r.iter().skip(1).step_by(2).sum();
    let salt: f64 = r.iter().step_by(2).sum();
    let scale = disc.flux_scale(&u);
    assert!(liquid.abs() <= 1e-12 * scale, "{liquid}");
    assert!(salt.abs() <= 1e-12 * scale, "{salt}");
}

#[test]
fn left_inflow_integrates_recharge() {
    let m = level0();
    let d = DofMap::build(&m);
    let disc = Discretization::new(&m, &d, scenario([0.0; 3]), Default::default());
    let total: f64 = disc.inflow.iter().map(|&(_, w)| w * disc.scenario.recharge(0.0)).sum();
    assert_relative_eq!(total, 3.3e-6, max_relative = 1e-12);
}

#[test]
fn dirichlet_rows_vanish_on_prescribed_values() {
    let m = level0();
    let d = DofMap::build(&m);
    let disc = Discretization::new(&m, &d, scenario([0.0; 3]), Default::default());
    let mut u = disc.initial_state().values;
    disc.impose_dirichlet(&mut u);
    let r = disc.residual(&u, &u, 32.0, 32.0).unwrap();
    let end = m.fracture.as_ref().unwrap().boundary_vertex();
    let f = d.vertices[end].fracture.unwrap();
    assert_eq!(u[2 * f], 1.0);
    assert_relative_eq!(u[2 * f + 1], -1025.0 * 9.8 * -0.5, max_relative = 1e-14);
    for &(s, _, _) in &disc.dirichlet {
        assert_eq!(r[2 * s], 0.0);
        assert_eq!(r[2 * s + 1], 0.0);
    }
}

#[test]
fn jacobian_matches_global_differences() {
    let m = mapped_grid(10, 2, 4, true);
    let d = DofMap::build(&m);
    let disc = Discretization::new(&m, &d, scenario([-0.4, 0.7, 0.5]), Default::default());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut u = hydrostatic(&disc, 0.0);
    for s in 0..d.num_slots() {
        u[2 * s] = rng.random_range(0.0..1.0);
        u[2 * s + 1] += rng.random_range(-20.0..20.0);
    }
    let old: Vec<f64> = u.iter().map(|x| x * 0.99).collect();
    let (r0, jac) = disc.assemble_system(&u, &old, 32.0, 32.0).unwrap();
    assert!(jac.is_structurally_symmetric() || !disc.dirichlet.is_empty());
    assert!(disc.pattern().is_structurally_symmetric());
    let n = u.len();
    let mut worst = 0.0f64;
    for j in (0..n).step_by(7) {
        let h = f64::EPSILON.sqrt() * u[j].abs().max(1.0);
        let mut up = u.clone();
        up[j] += h;
        let h = up[j] - u[j];
        let r1 = disc.residual(&up, &old, 32.0, 32.0).unwrap();
        let col: Vec<f64> = r1.iter().zip(&r0).map(|(a, b)| (a - b) / h).collect();
        let norm = col.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        for i in 0..n {
            worst = worst.max((jac.get(i, j) - col[i]).abs() / norm);
        }
    }
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn fracture_terms_scale_with_width() {
    let m = level0();
    let d = DofMap::build(&m);
    let sc = scenario([0.0; 3]);
    let mut wide = sc.clone();
    wide.epsilon *= 2.0;
    let a = Discretization::new(&m, &d, sc, Default::default());
    let b = Discretization::new(&m, &d, wide, Default::default());
    let unit = a.units.iter().find(|u| matches!(u.kind, UnitKind::FractureEdge(_))).unwrap();
    let lu = [0.2, 7000.0, 0.6, 6990.0];
    let lo = [0.1, 7000.0, 0.5, 6990.0];
    let (mut ra, mut rb) = ([0.0; 4], [0.0; 4]);
    a.unit_residual(unit, &lu, &lo, 1.0 / 32.0, &mut ra);
    b.unit_residual(unit, &lu, &lo, 1.0 / 32.0, &mut rb);
    for k in 0..4 {
        assert_relative_eq!(rb[k], 2.0 * ra[k], max_relative = 1e-13);
    }
    // The tip CV only sees its single edge.
    let fg = a.geometry.fracture.as_ref().unwrap();
    assert_relative_eq!(fg.cv_length[0], 0.5 * fg.edge_length[0], max_relative = 1e-15);
}

#[test]
fn balance_matches_residual_sum() {
    let m = level0();
    let d = DofMap::build(&m);
    let disc = Discretization::new(&m, &d, scenario([0.5, 0.5, 0.5]), Default::default());
    let mut u = disc.initial_state().values;
    disc.impose_dirichlet(&mut u);
    let old = u.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for s in 0..d.num_slots() {
        if !disc.is_dirichlet_slot(s) {
            u[2 * s] = rng.random_range(0.0..0.5);
            u[2 * s + 1] += rng.random_range(-1.0..1.0);
        }
    }
    let r = disc.residual(&u, &old, 32.0, 32.0).unwrap();
    let sum: f64 = (0..d.num_slots()).filter(|&s| !disc.is_dirichlet_slot(s)).map(|s| r[2 * s + 1]).sum();
    let b = disc.liquid_balance(&u, &old, 32.0, 32.0);
    assert!((b.imbalance - sum).abs() <= 1e-12 * b.scale, "{} vs {sum}", b.imbalance);
}

#[test]
fn vtk_has_all_sections() {
    let m = level0();
    let d = DofMap::build(&m);
    let disc = Discretization::new(&m, &d, scenario([0.0; 3]), Default::default());
    let text = write_vtk(&m, &d, &disc.initial_state());
    for key in ["POINTS", "CELLS", "CELL_TYPES", "SCALARS side", "SCALARS c", "SCALARS p"] {
        assert!(text.contains(key), "{key}");
    }
}
