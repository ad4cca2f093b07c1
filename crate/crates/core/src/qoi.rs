//! Quantities of interest: point values and box integrals of the mass
//! fraction, and whole-field snapshots lifted to a reference grid.

use crate::discretization::StateVector;
use crate::error::{Error, Result};
use crate::mesh::{polygon_area, DofMap, Element, MeshHierarchy, MeshLevel, Point, X_MAX, X_MIN, Y_MAX, Y_MIN};
use crate::params::PhysicalConstants;

/// Observation points where the mass fraction varies most.
pub const OBSERVATION_POINTS: [Point; 6] = [
    Point::new(1.1, -0.8),
    Point::new(1.2, -0.8),
    Point::new(1.3, -0.8),
    Point::new(1.1, -0.9),
    Point::new(1.2, -0.9),
    Point::new(1.3, -0.9),
];

/// Half-width of the boxes around the observation points [m].
pub const BOX_HALF_WIDTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoxQuadrature {
    /// Exact clipping of each element against the box, with a degree-2 rule on the pieces.
    #[default]
    Clipped,
    /// 4 x 4 sub-sampling lattice per element; lattice points inside the box count.
    Lattice,
}

impl BoxQuadrature {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "clipped" => Some(BoxQuadrature::Clipped),
            "lattice" => Some(BoxQuadrature::Lattice),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QoiKind {
    /// Mass fraction at a point.
    Point(Point),
    /// `int c rho(c)` over the box (salt mass); with `weighted = false` the plain mean of `c`.
    Box {
        center: Point,
        half_width: f64,
        weighted: bool,
        quadrature: BoxQuadrature,
    },
    /// Mass fraction field lifted to simulation level `reference_level`.
    Field { reference_level: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QoiSpec {
    pub id: String,
    pub kind: QoiKind,
    /// Evaluation times; must lie on the output grid.
    pub times: Vec<f64>,
}

impl QoiSpec {
    pub fn point(id: impl Into<String>, p: Point, times: Vec<f64>) -> Self {
        QoiSpec { id: id.into(), kind: QoiKind::Point(p), times }
    }

    pub fn salt_box(id: impl Into<String>, center: Point, times: Vec<f64>) -> Self {
        QoiSpec {
            id: id.into(),
            kind: QoiKind::Box { center, half_width: BOX_HALF_WIDTH, weighted: true, quadrature: BoxQuadrature::Clipped },
            times,
        }
    }

    pub fn field(id: impl Into<String>, reference_level: usize, times: Vec<f64>) -> Self {
        QoiSpec { id: id.into(), kind: QoiKind::Field { reference_level }, times }
    }

    pub fn is_field(&self) -> bool {
        matches!(self.kind, QoiKind::Field { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(format!("QoI `{}`: times must be strictly increasing", self.id)));
        }
        match self.kind {
            QoiKind::Point(p) => {
                if !(p.x > X_MIN && p.x < X_MAX && p.y > Y_MIN && p.y < Y_MAX) {
                    return Err(Error::PointOutside { x: p.x, y: p.y });
                }
            }
            QoiKind::Box { center, half_width, .. } => {
                let inside = center.x - half_width >= X_MIN
                    && center.x + half_width <= X_MAX
                    && center.y - half_width >= Y_MIN
                    && center.y + half_width <= Y_MAX;
                if !inside || !(half_width > 0.0) {
                    return Err(Error::Invalid(format!("QoI `{}`: box must lie inside the domain", self.id)));
                }
            }
            QoiKind::Field { .. } => {}
        }
        Ok(())
    }
}

/// Time series of one scalar QoI.
#[derive(Debug, Clone, PartialEq)]
pub struct QoiSeries {
    pub id: String,
    /// `(time, value)` with strictly increasing times.
    pub values: Vec<(f64, f64)>,
}

impl QoiSeries {
    pub fn at(&self, t: f64) -> Option<f64> {
        self.values.iter().find(|(s, _)| (s - t).abs() <= 1e-9 * t.abs().max(1.0)).map(|v| v.1)
    }
}

/// Mass fraction per slot of the reference grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub id: String,
    pub time: f64,
    pub reference_level: usize,
    pub values: Vec<f64>,
}

/// Interpolate the mass fraction at `p` from the element containing it.
pub fn evaluate_point(mesh: &MeshLevel, dofs: &DofMap, state: &StateVector, p: Point) -> Result<f64> {
    let loc = mesh.locate_point(p)?;
    Ok(dofs
        .element_slots(loc.element)
        .iter()
        .zip(&loc.weights)
        .map(|(&s, w)| w * state.c(s))
        .sum())
}

/// Quadrature rule for a box: `(slots, shape weights, quadrature weight)` per point.
#[derive(Debug, Clone)]
pub struct BoxRule {
    points: Vec<(Vec<usize>, Vec<f64>, f64)>,
    area: f64,
}

impl BoxRule {
    pub fn new(mesh: &MeshLevel, dofs: &DofMap, center: Point, half_width: f64, quadrature: BoxQuadrature) -> Self {
        let (x0, x1) = (center.x - half_width, center.x + half_width);
        let (y0, y1) = (center.y - half_width, center.y + half_width);
        let inside = |p: &Point| p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;
        let mut points = Vec::new();
        for e in 0..mesh.num_elements() {
            let pts = mesh.element_points(e);
            let (bx0, bx1, by0, by1) = pts.iter().fold((f64::MAX, f64::MIN, f64::MAX, f64::MIN), |b, p| {
                (b.0.min(p.x), b.1.max(p.x), b.2.min(p.y), b.3.max(p.y))
            });
            if bx1 < x0 || bx0 > x1 || by1 < y0 || by0 > y1 {
                continue;
            }
            let slots = dofs.element_slots(e).to_vec();
            let mut push = |q: Point, w: f64| {
                if w > 0.0 {
                    let shape = mesh.local_weights(e, q).unwrap_or_else(|| nearest_weights(mesh, e, q));
                    points.push((slots.clone(), shape, w));
                }
            };
            match quadrature {
                BoxQuadrature::Clipped => {
                    let poly = clip_to_box(&pts, x0, x1, y0, y1);
                    for k in 1..poly.len().saturating_sub(1) {
                        let tri = [poly[0], poly[k], poly[k + 1]];
                        let w = polygon_area(&tri) / 3.0;
                        for i in 0..3 {
                            push(tri[i].midpoint(tri[(i + 1) % 3]), w);
                        }
                    }
                }
                BoxQuadrature::Lattice => {
                    let w = mesh.element_area(e) / 16.0;
                    for q in lattice(&mesh.elements[e], &pts) {
                        if inside(&q) {
                            push(q, w);
                        }
                    }
                }
            }
        }
        BoxRule { points, area: (x1 - x0) * (y1 - y0) }
    }

    /// `sum w g(c(x_q))`.
    pub fn integrate(&self, state: &StateVector, g: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .map(|(slots, shape, w)| {
                let c: f64 = slots.iter().zip(shape).map(|(&s, n)| n * state.c(s)).sum();
                w * g(c)
            })
            .sum()
    }

    pub fn box_area(&self) -> f64 {
        self.area
    }
}

/// Salt mass `int c rho(c) dx` in the box [kg per unit depth].
pub fn evaluate_box_integral(
    mesh: &MeshLevel,
    dofs: &DofMap,
    constants: &PhysicalConstants,
    state: &StateVector,
    center: Point,
    half_width: f64,
) -> f64 {
    BoxRule::new(mesh, dofs, center, half_width, BoxQuadrature::Clipped).integrate(state, |c| c * constants.density(c))
}

/// Mean mass fraction in the box.
pub fn evaluate_box_average(mesh: &MeshLevel, dofs: &DofMap, state: &StateVector, center: Point, half_width: f64) -> f64 {
    let rule = BoxRule::new(mesh, dofs, center, half_width, BoxQuadrature::Clipped);
    rule.integrate(state, |c| c) / rule.box_area()
}

/// Lift the mass fraction of `state` (on simulation `level`) to `reference_level`.
pub fn field_snapshot(hierarchy: &MeshHierarchy, level: usize, reference_level: usize, state: &StateVector) -> Result<Vec<f64>> {
    if reference_level < level || reference_level > hierarchy.max_level() {
        return Err(Error::Invalid(format!(
            "reference level {reference_level} must lie between {level} and {}",
            hierarchy.max_level()
        )));
    }
    if state.values.len() != hierarchy.dofs(level).num_dofs() {
        return Err(Error::Dimension { expected: hierarchy.dofs(level).num_dofs(), got: state.values.len() });
    }
    let mut field = state.mass_fractions();
    for l in level..reference_level {
        field = hierarchy.transfer(l).apply_slots(&field);
    }
    Ok(field)
}

/// QoI evaluation prepared for one grid: points located, box rules built.
#[derive(Debug, Clone)]
pub struct PreparedQoi {
    pub spec: QoiSpec,
    eval: Prepared,
}

#[derive(Debug, Clone)]
enum Prepared {
    Point { slots: Vec<usize>, weights: Vec<f64> },
    Box { rule: BoxRule, weighted: bool },
    Field { reference_level: usize },
}

impl PreparedQoi {
    pub fn new(spec: &QoiSpec, mesh: &MeshLevel, dofs: &DofMap) -> Result<Self> {
        spec.validate()?;
        let eval = match &spec.kind {
            QoiKind::Point(p) => {
                let loc = mesh.locate_point(*p)?;
                Prepared::Point { slots: dofs.element_slots(loc.element).to_vec(), weights: loc.weights }
            }
            QoiKind::Box { center, half_width, weighted, quadrature } => Prepared::Box {
                rule: BoxRule::new(mesh, dofs, *center, *half_width, *quadrature),
                weighted: *weighted,
            },
            QoiKind::Field { reference_level } => Prepared::Field { reference_level: *reference_level },
        };
        Ok(PreparedQoi { spec: spec.clone(), eval })
    }

    /// Scalar value, or `None` for field QoIs.
    pub fn scalar(&self, state: &StateVector, constants: &PhysicalConstants) -> Option<f64> {
        match &self.eval {
            Prepared::Point { slots, weights } => Some(slots.iter().zip(weights).map(|(&s, w)| w * state.c(s)).sum()),
            Prepared::Box { rule, weighted: true } => Some(rule.integrate(state, |c| c * constants.density(c))),
            Prepared::Box { rule, weighted: false } => Some(rule.integrate(state, |c| c) / rule.box_area()),
            Prepared::Field { .. } => None,
        }
    }

    pub fn reference_level(&self) -> Option<usize> {
        match self.eval {
            Prepared::Field { reference_level } => Some(reference_level),
            _ => None,
        }
    }
}

/// Sutherland-Hodgman clipping of a convex polygon against an axis box.
fn clip_to_box(poly: &[Point], x0: f64, x1: f64, y0: f64, y1: f64) -> Vec<Point> {
    let mut out = poly.to_vec();
    let planes: [(usize, f64, f64); 4] = [(0, x0, 1.0), (0, x1, -1.0), (1, y0, 1.0), (1, y1, -1.0)];
    for (axis, value, sign) in planes {
        if out.is_empty() {
            break;
        }
        let coord = |p: &Point| if axis == 0 { p.x } else { p.y };
        let dist = |p: &Point| sign * (coord(p) - value);
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let (a, b) = (input[i], input[(i + 1) % input.len()]);
            let (da, db) = (dist(&a), dist(&b));
            if da >= 0.0 {
                out.push(a);
            }
            if (da >= 0.0) != (db >= 0.0) {
                let t = da / (da - db);
                out.push(Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
            }
        }
    }
    out
}

fn lattice(element: &Element, pts: &[Point]) -> Vec<Point> {
    match element {
        Element::Quadrilateral(_) => {
            let mut q = Vec::with_capacity(16);
            for i in 0..4 {
                for j in 0..4 {
                    let xi = -1.0 + (2 * i + 1) as f64 / 4.0;
                    let eta = -1.0 + (2 * j + 1) as f64 / 4.0;
                    q.push(crate::mesh::bilinear_map(pts, xi, eta));
                }
            }
            q
        }
        Element::Triangle(_) => {
            // Centroids of the 16 triangles of a fourfold edge subdivision.
            let at = |i: f64, j: f64| {
                let (u, v) = (i / 4.0, j / 4.0);
                Point::new(
                    pts[0].x + u * (pts[1].x - pts[0].x) + v * (pts[2].x - pts[0].x),
                    pts[0].y + u * (pts[1].y - pts[0].y) + v * (pts[2].y - pts[0].y),
                )
            };
            let mut q = Vec::with_capacity(16);
            for i in 0..4 {
                for j in 0..4 - i {
                    let (fi, fj) = (i as f64, j as f64);
                    q.push(at(fi + 1.0 / 3.0, fj + 1.0 / 3.0));
                    if i + j < 3 {
                        q.push(at(fi + 2.0 / 3.0, fj + 2.0 / 3.0));
                    }
                }
            }
            q
        }
    }
}

/// Weights for a point that sits on the element boundary up to rounding.
fn nearest_weights(mesh: &MeshLevel, e: usize, q: Point) -> Vec<f64> {
    let pts = mesh.element_points(e);
    let c = mesh.element_centroid(e);
    // Pull the point slightly toward the centroid.
    let q = Point::new(q.x + 1e-9 * (c.x - q.x), q.y + 1e-9 * (c.y - q.y));
    mesh.local_weights(e, q).unwrap_or_else(|| vec![1.0 / pts.len() as f64; pts.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::test_meshes::mapped_grid;
    use approx::assert_relative_eq;

    fn state_from(mesh: &MeshLevel, dofs: &DofMap, f: impl Fn(Point) -> f64) -> StateVector {
        let mut values = vec![0.0; dofs.num_dofs()];
        for s in 0..dofs.num_slots() {
            values[2 * s] = f(mesh.points[dofs.slot_vertex(s)]);
        }
        StateVector { values, time: 0.0 }
    }

    #[test]
    fn point_values_exact_for_linears() {
        let m = mapped_grid(10, 2, 4, true).refine();
        let d = DofMap::build(&m);
        let s = state_from(&m, &d, |_| 0.3);
        assert_relative_eq!(evaluate_point(&m, &d, &s, Point::new(0.77, -0.31)).unwrap(), 0.3, max_relative = 1e-14);
        let s = state_from(&m, &d, |p| p.x / 2.0);
        assert_relative_eq!(evaluate_point(&m, &d, &s, Point::new(1.2, -0.8)).unwrap(), 0.6, max_relative = 1e-13);
        assert!(matches!(evaluate_point(&m, &d, &s, Point::new(1.5, -0.6)), Err(Error::PointOnFracture { .. })));
    }

    #[test]
    fn point_below_fracture_uses_lower_side() {
        let m = mapped_grid(10, 2, 4, true).refine();
        let d = DofMap::build(&m);
        let mut values = vec![0.0; d.num_dofs()];
        for s in 0..d.num_slots() {
            values[2 * s] = match d.slot_kind(s) {
                crate::mesh::SlotKind::BulkSide(crate::mesh::Side::Upper) => 1.0,
                _ => 0.0,
            };
        }
        let s = StateVector { values, time: 0.0 };
        // Vertices of the containing element near the fracture carry only the lower value.
        assert_eq!(evaluate_point(&m, &d, &s, Point::new(1.1, -0.69)).unwrap(), 0.0);
        assert!(evaluate_point(&m, &d, &s, Point::new(1.1, -0.67)).unwrap() > 0.0);
    }

    #[test]
    fn box_integrals() {
        let m = mapped_grid(10, 2, 4, true).refine();
        let d = DofMap::build(&m);
        let c = PhysicalConstants::default();
        let one = state_from(&m, &d, |_| 1.0);
        for center in OBSERVATION_POINTS {
            assert_relative_eq!(evaluate_box_integral(&m, &d, &c, &one, center, 0.1), 41.0, max_relative = 1e-12);
        }
        let zero = state_from(&m, &d, |_| 0.0);
        assert_eq!(evaluate_box_integral(&m, &d, &c, &zero, Point::new(1.2, -0.8), 0.1), 0.0);
        // int over [1.1,1.3]x[-0.9,-0.7] of x (1000 + 25 x) = 0.2 * [500 x^2 + 25 x^3 / 3].
        let exact = 0.2 * (500.0 * (1.3f64.powi(2) - 1.1f64.powi(2)) + 25.0 / 3.0 * (1.3f64.powi(3) - 1.1f64.powi(3)));
        let fine = m.refine();
        let fd = DofMap::build(&fine);
        let lin = state_from(&fine, &fd, |p| p.x);
        let got = evaluate_box_integral(&fine, &fd, &c, &lin, Point::new(1.2, -0.8), 0.1);
        assert_relative_eq!(got, exact, max_relative = 1e-2);
        let lattice = BoxRule::new(&fine, &fd, Point::new(1.2, -0.8), 0.1, BoxQuadrature::Lattice)
            .integrate(&lin, |x| x * c.density(x));
        assert_relative_eq!(lattice, exact, max_relative = 5e-2);
        let one_fine = state_from(&fine, &fd, |_| 1.0);
        assert_relative_eq!(evaluate_box_average(&fine, &fd, &one_fine, Point::new(0.5, -0.5), 0.1), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn clipping_square() {
        let sq = [Point::new(0.0, 0.0), Point::new(2.0, 0.0), Point::new(2.0, 2.0), Point::new(0.0, 2.0)];
        let c = clip_to_box(&sq, 1.0, 3.0, -1.0, 1.0);
        assert_relative_eq!(polygon_area(&c), 1.0, max_relative = 1e-15);
        assert!(clip_to_box(&sq, 3.0, 4.0, 0.0, 1.0).is_empty());
    }
}
