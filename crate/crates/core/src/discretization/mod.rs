//! Vertex-centered finite volumes for the coupled bulk and fracture system,
//! with full upwinding and implicit Euler in time.
//!
//! The unknowns are `(c, p)` per slot of the [`DofMap`]: DOF `2s` is the
//! mass fraction and `2s + 1` the pressure. Row `2s` holds the salt balance
//! and row `2s + 1` the liquid balance of the slot's control volume.
//! Residuals are outflow-positive: `R = storage rate + net outflow - inflow`.

mod flux;
mod geometry;
mod simulate;
mod vtk;

pub use flux::{darcy_velocity, exchange_mass_fluxes, normal_exchange_velocity, GravityTerm};
pub use geometry::{BoxGeometry, ElementBoxes, FractureGeometry, ScvFace};
pub use simulate::{
    simulate, CostRecord, SimulationConfig, SimulationOutput, StepObserver, StepReport, TimeGrid,
};
pub use vtk::write_vtk;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryMarker, DofMap, MeshLevel};
use crate::params::ScenarioFields;
use crate::sparse::CsrMatrix;

/// Solution values for all DOFs of one grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub values: Vec<f64>,
    pub time: f64,
}

impl StateVector {
    pub fn c(&self, slot: usize) -> f64 {
        self.values[2 * slot]
    }

    pub fn p(&self, slot: usize) -> f64 {
        self.values[2 * slot + 1]
    }

    /// Mass fraction per slot.
    pub fn mass_fractions(&self) -> Vec<f64> {
        self.values.iter().step_by(2).copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiscretizationConfig {
    pub gravity_term: GravityTerm,
}

#[derive(Debug, Clone, Copy)]
enum UnitKind {
    Element(usize),
    FractureEdge(usize),
    Exchange(usize),
}

/// A group of DOFs coupled by one local residual.
#[derive(Debug, Clone)]
struct Unit {
    kind: UnitKind,
    dofs: Vec<usize>,
    /// Row-major `dofs x dofs` positions in the Jacobian value array.
    positions: Vec<usize>,
}

/// Scenario-dependent coefficients at the points where they are used.
#[derive(Debug, Clone)]
struct Material {
    vertex_porosity: Vec<f64>,
    /// Per element, per face: `K` and `phi D0` at the integration point.
    face_permeability: Vec<Vec<f64>>,
    face_diffusion: Vec<Vec<f64>>,
    /// Per fracture chain vertex.
    normal_permeability: Vec<f64>,
    normal_diffusion: Vec<f64>,
}

/// Liquid mass balance of one time step over the non-Dirichlet control volumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassBalance {
    /// Rate of change of stored liquid mass [kg/(m s)].
    pub storage_rate: f64,
    /// Prescribed inflow through the left boundary.
    pub boundary_inflow: f64,
    /// Net outflow into the Dirichlet control volumes.
    pub dirichlet_outflow: f64,
    /// `storage - inflow + outflow`.
    pub imbalance: f64,
    /// Sum of absolute flux and storage terms, for relative measures.
    pub scale: f64,
}

impl MassBalance {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.imbalance.abs() / self.scale
        } else {
            self.imbalance.abs()
        }
    }
}

/// Residual and Jacobian assembly for one grid and one scenario.
#[derive(Debug, Clone)]
pub struct Discretization<'a> {
    pub mesh: &'a MeshLevel,
    pub dofs: &'a DofMap,
    pub geometry: BoxGeometry,
    pub scenario: ScenarioFields,
    pub config: DiscretizationConfig,
    material: Material,
    units: Vec<Unit>,
    pattern: CsrMatrix,
    /// `(slot, c value, p value)` for every Dirichlet slot.
    dirichlet: Vec<(usize, f64, f64)>,
    is_dirichlet: Vec<bool>,
    /// `(slot, weight)`: liquid inflow `weight * q_in(t)` per left-boundary slot.
    inflow: Vec<(usize, f64)>,
}

impl<'a> Discretization<'a> {
    pub fn new(mesh: &'a MeshLevel, dofs: &'a DofMap, scenario: ScenarioFields, config: DiscretizationConfig) -> Self {
        let geometry = BoxGeometry::new(mesh);
        let material = Material::new(mesh, &geometry, &scenario);
        let mut units = Vec::new();
        for e in 0..mesh.num_elements() {
            let dofs_e = dofs.element_slots(e).iter().flat_map(|&s| [2 * s, 2 * s + 1]).collect();
            units.push(Unit { kind: UnitKind::Element(e), dofs: dofs_e, positions: Vec::new() });
        }
        if let Some(f) = &mesh.fracture {
            for (k, [a, b]) in f.edges().enumerate() {
                let (sa, sb) = (dofs.vertices[a].fracture.unwrap(), dofs.vertices[b].fracture.unwrap());
                units.push(Unit {
                    kind: UnitKind::FractureEdge(k),
                    dofs: vec![2 * sa, 2 * sa + 1, 2 * sb, 2 * sb + 1],
                    positions: Vec::new(),
                });
            }
            for (k, &v) in f.chain.iter().enumerate() {
                let vd = dofs.vertices[v];
                let sf = vd.fracture.unwrap();
                let mut d = vec![2 * sf, 2 * sf + 1, 2 * vd.bulk[0], 2 * vd.bulk[0] + 1];
                if vd.is_duplicated() {
                    d.extend([2 * vd.bulk[1], 2 * vd.bulk[1] + 1]);
                }
                units.push(Unit { kind: UnitKind::Exchange(k), dofs: d, positions: Vec::new() });
            }
        }

        let n = dofs.num_dofs();
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for u in &units {
            for &i in &u.dofs {
                rows[i].extend_from_slice(&u.dofs);
            }
        }
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        let pattern = CsrMatrix::from_pattern(n, n, &rows);
        for u in &mut units {
            u.positions = u
                .dofs
                .iter()
                .flat_map(|&i| u.dofs.iter().map(move |&j| (i, j)))
                .map(|(i, j)| pattern.position(i, j).unwrap())
                .collect();
        }

        let consts = &scenario.constants;
        let mut dirichlet = Vec::new();
        let mut is_dirichlet = vec![false; dofs.num_slots()];
        for v in mesh.boundary_vertices(BoundaryMarker::Right) {
            let p = consts.hydrostatic_pressure(mesh.points[v].y);
            for s in dofs.vertex_slots(v) {
                dirichlet.push((s, 1.0, p));
                is_dirichlet[s] = true;
            }
        }
        let mut inflow = Vec::new();
        for be in mesh.boundary.iter().filter(|b| b.marker == BoundaryMarker::Left) {
            let [a, b] = be.vertices;
            let half = 0.5 * mesh.points[a].dist(mesh.points[b]);
            for v in [a, b] {
                for s in dofs.vertex_slots(v) {
                    if !is_dirichlet[s] {
                        inflow.push((s, half));
                    }
                }
            }
        }

        Discretization {
            mesh,
            dofs,
            geometry,
            scenario,
            config,
            material,
            units,
            pattern,
            dirichlet,
            is_dirichlet,
            inflow,
        }
    }

    pub fn num_dofs(&self) -> usize {
        self.dofs.num_dofs()
    }

    pub fn is_dirichlet_slot(&self, slot: usize) -> bool {
        self.is_dirichlet[slot]
    }

    /// Zero mass fraction and the hydrostatic brine pressure everywhere.
    pub fn initial_state(&self) -> StateVector {
        let mut values = vec![0.0; self.num_dofs()];
        for s in 0..self.dofs.num_slots() {
            let y = self.mesh.points[self.dofs.slot_vertex(s)].y;
            values[2 * s + 1] = self.scenario.constants.hydrostatic_pressure(y);
        }
        StateVector { values, time: 0.0 }
    }

    /// Overwrite the Dirichlet DOFs with their prescribed values.
    pub fn impose_dirichlet(&self, u: &mut [f64]) {
        for &(s, c, p) in &self.dirichlet {
            u[2 * s] = c;
            u[2 * s + 1] = p;
        }
    }

    fn gather(&self, unit: &Unit, u: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(unit.dofs.iter().map(|&i| u[i]));
    }

    /// Local residual of one unit; `inv_tau = 0` drops storage.
    fn unit_residual(&self, unit: &Unit, lu: &[f64], lold: &[f64], inv_tau: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let c = &self.scenario.constants;
        match unit.kind {
            UnitKind::Element(e) => {
                let boxes = &self.geometry.elements[e];
                let verts = self.mesh.elements[e].vertices();
                let nl = verts.len();
                if inv_tau != 0.0 {
                    for a in 0..nl {
                        let vol = boxes.volumes[a] * self.material.vertex_porosity[verts[a]] * inv_tau;
                        let (cn, co) = (lu[2 * a], lold[2 * a]);
                        let (rn, ro) = (c.density(cn), c.density(co));
                        out[2 * a] += vol * (rn * cn - ro * co);
                        out[2 * a + 1] += vol * (rn - ro);
                    }
                }
                for (k, face) in boxes.faces.iter().enumerate() {
                    let (f, s) = self.face_flux(e, k, face, lu);
                    let (i, j) = (face.from, face.to);
                    out[2 * i] += s;
                    out[2 * j] -= s;
                    out[2 * i + 1] += f;
                    out[2 * j + 1] -= f;
                }
            }
            UnitKind::FractureEdge(k) => {
                let fg = self.geometry.fracture.as_ref().unwrap();
                let len = fg.edge_length[k];
                let eps = self.scenario.epsilon;
                if inv_tau != 0.0 {
                    let vol = 0.5 * len * eps * c.phi_f * inv_tau;
                    for a in 0..2 {
                        let (cn, co) = (lu[2 * a], lold[2 * a]);
                        let (rn, ro) = (c.density(cn), c.density(co));
                        out[2 * a] += vol * (rn * cn - ro * co);
                        out[2 * a + 1] += vol * (rn - ro);
                    }
                }
                let (f, s) = self.fracture_flux(k, lu);
                out[0] += s;
                out[2] -= s;
                out[1] += f;
                out[3] -= f;
            }
            UnitKind::Exchange(k) => {
                let fg = self.geometry.fracture.as_ref().unwrap();
                let len = fg.cv_length[k];
                let (cf, pf) = (lu[0], lu[1]);
                for side in 0..2 {
                    let m = if lu.len() == 6 { 2 + 2 * side } else { 2 };
                    let (q, p) = self.exchange_flux(k, side, lu[m], lu[m + 1], cf, pf);
                    out[0] += len * p;
                    out[1] += len * q;
                    out[m] -= len * p;
                    out[m + 1] -= len * q;
                }
            }
        }
    }

    /// Liquid and salt mass flux through face `k` of element `e`, from `face.from` to `face.to`.
    fn face_flux(&self, e: usize, k: usize, face: &ScvFace, lu: &[f64]) -> (f64, f64) {
        let c = &self.scenario.constants;
        let (mut gp, mut gc) = ([0.0; 2], [0.0; 2]);
        for (a, g) in face.grad.iter().enumerate() {
            gc[0] += g[0] * lu[2 * a];
            gc[1] += g[1] * lu[2 * a];
            gp[0] += g[0] * lu[2 * a + 1];
            gp[1] += g[1] * lu[2 * a + 1];
        }
        let (ci, cj) = (lu[2 * face.from], lu[2 * face.to]);
        let rho = 0.5 * (c.density(ci) + c.density(cj));
        let q = darcy_velocity(self.material.face_permeability[e][k], gp, rho, c);
        let qn = q[0] * face.normal[0] + q[1] * face.normal[1];
        let f = rho * qn;
        let c_up = if qn >= 0.0 { ci } else { cj };
        let diff = self.material.face_diffusion[e][k] * (gc[0] * face.normal[0] + gc[1] * face.normal[1]);
        (f, f * c_up - rho * diff)
    }

    /// Liquid and salt mass flux along fracture edge `k`, tip side to boundary side.
    fn fracture_flux(&self, k: usize, lu: &[f64]) -> (f64, f64) {
        let c = &self.scenario.constants;
        let fg = self.geometry.fracture.as_ref().unwrap();
        let len = fg.edge_length[k];
        let eps = self.scenario.epsilon;
        let (ca, pa, cb, pb) = (lu[0], lu[1], lu[2], lu[3]);
        let rho = 0.5 * (c.density(ca) + c.density(cb));
        let g = c.gravity_vector();
        let g_t = g[0] * fg.tangent[0] + g[1] * fg.tangent[1];
        let qt = -(c.k_f / c.viscosity) * ((pb - pa) / len - rho * g_t);
        let f = eps * rho * qt;
        let c_up = if qt >= 0.0 { ca } else { cb };
        (f, f * c_up - eps * rho * self.scenario.fracture_diffusion() * (cb - ca) / len)
    }

    /// `(Q, P)` from the fracture into side `side` at chain vertex `k`.
    fn exchange_flux(&self, k: usize, side: usize, cm: f64, pm: f64, cf: f64, pf: f64) -> (f64, f64) {
        let fg = self.geometry.fracture.as_ref().unwrap();
        let c = &self.scenario.constants;
        let eps = self.scenario.epsilon;
        let q = normal_exchange_velocity(
            pm,
            pf,
            cm,
            cf,
            eps,
            self.material.normal_permeability[k],
            fg.normals[side],
            c,
            self.config.gravity_term,
        );
        exchange_mass_fluxes(q, cm, cf, self.material.normal_diffusion[k], eps, c)
    }

    /// Residual without Dirichlet rows replaced.
    fn raw_residual(&self, u: &[f64], old: &[f64], t_new: f64, inv_tau: f64) -> Vec<f64> {
        let mut r = vec![0.0; self.num_dofs()];
        let (mut lu, mut lo, mut lr) = (Vec::new(), Vec::new(), Vec::new());
        for unit in &self.units {
            self.gather(unit, u, &mut lu);
            self.gather(unit, old, &mut lo);
            lr.resize(unit.dofs.len(), 0.0);
            self.unit_residual(unit, &lu, &lo, inv_tau, &mut lr);
            for (&i, &v) in unit.dofs.iter().zip(&lr) {
                r[i] += v;
            }
        }
        let q_in = self.scenario.recharge(t_new);
        for &(s, w) in &self.inflow {
            r[2 * s + 1] -= w * q_in;
        }
        r
    }

    fn check_finite(r: &[f64]) -> Result<()> {
        match r.iter().position(|x| !x.is_finite()) {
            Some(dof) => Err(Error::NonFiniteAssembly { dof }),
            None => Ok(()),
        }
    }

    /// Implicit Euler residual at `t_new`; `tau = f64::INFINITY` gives the steady residual.
    pub fn residual(&self, u: &[f64], old: &[f64], t_new: f64, tau: f64) -> Result<Vec<f64>> {
        let mut r = self.raw_residual(u, old, t_new, 1.0 / tau);
        for &(s, c, p) in &self.dirichlet {
            r[2 * s] = u[2 * s] - c;
            r[2 * s + 1] = u[2 * s + 1] - p;
        }
        Self::check_finite(&r)?;
        Ok(r)
    }

    /// Residual and finite-difference Jacobian.
    pub fn assemble_system(&self, u: &[f64], old: &[f64], t_new: f64, tau: f64) -> Result<(Vec<f64>, CsrMatrix)> {
        let inv_tau = 1.0 / tau;
        let mut jac = self.pattern.clone();
        let mut r = vec![0.0; self.num_dofs()];
        let (mut lu, mut lo, mut r0, mut r1) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for unit in &self.units {
            let nl = unit.dofs.len();
            self.gather(unit, u, &mut lu);
            self.gather(unit, old, &mut lo);
            r0.resize(nl, 0.0);
            r1.resize(nl, 0.0);
            self.unit_residual(unit, &lu, &lo, inv_tau, &mut r0);
            for (&i, &v) in unit.dofs.iter().zip(&r0) {
                r[i] += v;
            }
            let values = jac.values_mut();
            for j in 0..nl {
                let saved = lu[j];
                let h = f64::EPSILON.sqrt() * saved.abs().max(1.0);
                lu[j] = saved + h;
                let h = lu[j] - saved;
                self.unit_residual(unit, &lu, &lo, inv_tau, &mut r1);
                lu[j] = saved;
                for i in 0..nl {
                    values[unit.positions[i * nl + j]] += (r1[i] - r0[i]) / h;
                }
            }
        }
        let q_in = self.scenario.recharge(t_new);
        for &(s, w) in &self.inflow {
            r[2 * s + 1] -= w * q_in;
        }
        for &(s, c, p) in &self.dirichlet {
            r[2 * s] = u[2 * s] - c;
            r[2 * s + 1] = u[2 * s + 1] - p;
            jac.set_identity_row(2 * s);
            jac.set_identity_row(2 * s + 1);
        }
        Self::check_finite(&r)?;
        if let Some(k) = jac.values().iter().position(|x| !x.is_finite()) {
            let row = jac.row_ptr().partition_point(|&p| p <= k) - 1;
            return Err(Error::NonFiniteAssembly { dof: row });
        }
        Ok((r, jac))
    }

    /// Liquid mass balance from an independent flux pass.
    pub fn liquid_balance(&self, u: &[f64], old: &[f64], t_new: f64, tau: f64) -> MassBalance {
        let c = &self.scenario.constants;
        let inv_tau = 1.0 / tau;
        let mut storage = 0.0;
        let mut outflow = 0.0;
        let mut scale = 0.0;
        let inside = |s: usize| !self.is_dirichlet[s];
        let mut lu = Vec::new();
        let mut add_flux = |from: usize, to: usize, f: f64, scale: &mut f64| {
            *scale += f.abs();
            match (inside(from), inside(to)) {
                (true, false) => outflow += f,
                (false, true) => outflow -= f,
                _ => {}
            }
        };
        for unit in &self.units {
            self.gather(unit, u, &mut lu);
            let slot = |local: usize| unit.dofs[2 * local] / 2;
            match unit.kind {
                UnitKind::Element(e) => {
                    let boxes = &self.geometry.elements[e];
                    let verts = self.mesh.elements[e].vertices();
                    for a in 0..verts.len() {
                        if inside(slot(a)) {
                            let vol = boxes.volumes[a] * self.material.vertex_porosity[verts[a]];
                            let s = vol * (c.density(lu[2 * a]) - c.density(old[unit.dofs[2 * a]])) * inv_tau;
                            storage += s;
                            scale += s.abs();
                        }
                    }
                    for (k, face) in boxes.faces.iter().enumerate() {
                        let (f, _) = self.face_flux(e, k, face, &lu);
                        add_flux(slot(face.from), slot(face.to), f, &mut scale);
                    }
                }
                UnitKind::FractureEdge(k) => {
                    let len = self.geometry.fracture.as_ref().unwrap().edge_length[k];
                    let vol = 0.5 * len * self.scenario.epsilon * c.phi_f;
                    for a in 0..2 {
                        if inside(slot(a)) {
                            let s = vol * (c.density(lu[2 * a]) - c.density(old[unit.dofs[2 * a]])) * inv_tau;
                            storage += s;
                            scale += s.abs();
                        }
                    }
                    let (f, _) = self.fracture_flux(k, &lu);
                    add_flux(slot(0), slot(1), f, &mut scale);
                }
                UnitKind::Exchange(k) => {
                    let len = self.geometry.fracture.as_ref().unwrap().cv_length[k];
                    for side in 0..2 {
                        let m = if lu.len() == 6 { 1 + side } else { 1 };
                        let (q, _) = self.exchange_flux(k, side, lu[2 * m], lu[2 * m + 1], lu[0], lu[1]);
                        add_flux(slot(0), slot(m), len * q, &mut scale);
                    }
                }
            }
        }
        let q_in = self.scenario.recharge(t_new);
        let inflow: f64 = self.inflow.iter().map(|&(_, w)| w * q_in).sum();
        scale += inflow.abs();
        MassBalance {
            storage_rate: storage,
            boundary_inflow: inflow,
            dirichlet_outflow: outflow,
            imbalance: storage - inflow + outflow,
            scale,
        }
    }

    /// Sum of absolute liquid flux contributions per row, a scale for residual checks.
    pub fn flux_scale(&self, u: &[f64]) -> f64 {
        let mut scale = 0.0;
        let mut lu = Vec::new();
        for unit in &self.units {
            self.gather(unit, u, &mut lu);
            match unit.kind {
                UnitKind::Element(e) => {
                    for (k, face) in self.geometry.elements[e].faces.iter().enumerate() {
                        scale += 2.0 * self.pressure_flux_magnitude(e, k, face, &lu);
                    }
                }
                UnitKind::FractureEdge(k) => {
                    let c = &self.scenario.constants;
                    let fg = self.geometry.fracture.as_ref().unwrap();
                    let rho = 0.5 * (c.density(lu[0]) + c.density(lu[2]));
                    let f = self.scenario.epsilon * rho * c.k_f / c.viscosity * (lu[3] - lu[1]).abs() / fg.edge_length[k];
                    scale += 2.0 * f;
                }
                UnitKind::Exchange(_) => {}
            }
        }
        scale
    }

    /// `rho K/mu |grad p . n|` at a face: the size of the pressure-driven flux.
    fn pressure_flux_magnitude(&self, e: usize, k: usize, face: &ScvFace, lu: &[f64]) -> f64 {
        let c = &self.scenario.constants;
        let mut gp = [0.0; 2];
        for (a, g) in face.grad.iter().enumerate() {
            gp[0] += g[0] * lu[2 * a + 1];
            gp[1] += g[1] * lu[2 * a + 1];
        }
        let rho = 0.5 * (c.density(lu[2 * face.from]) + c.density(lu[2 * face.to]));
        rho * self.material.face_permeability[e][k] / c.viscosity * (gp[0] * face.normal[0] + gp[1] * face.normal[1]).abs()
    }

    /// Jacobian sparsity pattern (values zero).
    pub fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }
}

impl Material {
    fn new(mesh: &MeshLevel, geometry: &BoxGeometry, s: &ScenarioFields) -> Self {
        let vertex_porosity = mesh.points.iter().map(|p| s.porosity(p.x, p.y)).collect();
        let face_permeability = geometry
            .elements
            .iter()
            .map(|b| b.faces.iter().map(|f| s.permeability(f.ip.x, f.ip.y)).collect())
            .collect();
        let face_diffusion = geometry
            .elements
            .iter()
            .map(|b| b.faces.iter().map(|f| s.bulk_diffusion(f.ip.x, f.ip.y)).collect())
            .collect();
        let chain: &[usize] = mesh.fracture.as_ref().map_or(&[], |f| &f.chain);
        let normal_permeability = chain.iter().map(|&v| s.normal_permeability(mesh.points[v].x, mesh.points[v].y)).collect();
        let normal_diffusion = chain.iter().map(|&v| s.normal_diffusion(mesh.points[v].x, mesh.points[v].y)).collect();
        Material {
            vertex_porosity,
            face_permeability,
            face_diffusion,
            normal_permeability,
            normal_diffusion,
        }
    }
}

#[cfg(test)]
mod tests;
