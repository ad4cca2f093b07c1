//! Conforming 2D grids over the aquifer with the fracture resolved as grid
//! edges, their regular refinement, and the degree-of-freedom layout.
//!
//! The fracture is a straight polyline from the immersed tip
//! [`FRACTURE_TIP`] to [`FRACTURE_END`] on the right boundary. Geometry stays
//! single-valued: the two fracture sides exist only in the [`DofMap`], as
//! extra slots on the vertices of the polyline.

mod dof;
mod io;
mod transfer;

pub use dof::{DofMap, Side, SlotKind, VertexDofs};
pub use io::{load_coarse_mesh, parse_coarse_mesh, write_coarse_mesh, CoarseMesh};
pub use transfer::{build_transfer, TransferOperator};

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Domain `[0, 2] x [-1, 0]`.
pub const X_MIN: f64 = 0.0;
pub const X_MAX: f64 = 2.0;
pub const Y_MIN: f64 = -1.0;
pub const Y_MAX: f64 = 0.0;

/// Inner (immersed) end of the fracture.
pub const FRACTURE_TIP: Point = Point { x: 1.0, y: -0.7 };
/// End of the fracture on the right boundary.
pub const FRACTURE_END: Point = Point { x: 2.0, y: -0.5 };

pub(crate) const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn sub(self, other: Point) -> [f64; 2] {
        [self.x - other.x, self.y - other.y]
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

pub(crate) fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Distance from `p` to the segment `[a, b]`.
pub(crate) fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b.sub(a);
    let ap = p.sub(a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    p.dist(Point::new(a.x + t * ab[0], a.y + t * ab[1]))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Element {
    Triangle([usize; 3]),
    Quadrilateral([usize; 4]),
}

impl Element {
    pub fn vertices(&self) -> &[usize] {
        match self {
            Element::Triangle(v) => v,
            Element::Quadrilateral(v) => v,
        }
    }

    /// Edges in counterclockwise order, edge `k` joins local vertices `k` and `k+1`.
    pub fn edges(&self) -> impl Iterator<Item = [usize; 2]> + '_ {
        let v = self.vertices();
        (0..v.len()).map(move |k| [v[k], v[(k + 1) % v.len()]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryMarker {
    Left,
    Right,
    Top,
    Bottom,
}

impl BoundaryMarker {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "left" => Some(BoundaryMarker::Left),
            "right" => Some(BoundaryMarker::Right),
            "top" => Some(BoundaryMarker::Top),
            "bottom" => Some(BoundaryMarker::Bottom),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundaryMarker::Left => "left",
            BoundaryMarker::Right => "right",
            BoundaryMarker::Top => "top",
            BoundaryMarker::Bottom => "bottom",
        }
    }

    fn holds(self, p: Point) -> bool {
        match self {
            BoundaryMarker::Left => (p.x - X_MIN).abs() <= GEOM_TOL,
            BoundaryMarker::Right => (p.x - X_MAX).abs() <= GEOM_TOL,
            BoundaryMarker::Top => (p.y - Y_MAX).abs() <= GEOM_TOL,
            BoundaryMarker::Bottom => (p.y - Y_MIN).abs() <= GEOM_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub marker: BoundaryMarker,
}

/// Origin of a vertex created by refinement, in terms of coarse vertex ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexParent {
    Vertex(usize),
    Edge([usize; 2]),
    Center([usize; 4]),
}

/// Parent-child records linking a refined mesh to the mesh it came from.
#[derive(Debug, Clone)]
pub struct RefinementRecord {
    pub vertex_parents: Vec<VertexParent>,
    pub element_parents: Vec<usize>,
    /// Vertex and element counts of the parent mesh.
    pub parent_vertices: usize,
    pub parent_elements: usize,
}

/// The fracture polyline as an ordered vertex chain.
#[derive(Debug, Clone)]
pub struct Fracture {
    /// Vertex ids from the immersed tip to the boundary vertex.
    pub chain: Vec<usize>,
    /// For each mesh vertex, its position in `chain`.
    position: Vec<Option<usize>>,
}

impl Fracture {
    pub fn tip(&self) -> usize {
        self.chain[0]
    }

    pub fn boundary_vertex(&self) -> usize {
        *self.chain.last().unwrap()
    }

    pub fn position(&self, vertex: usize) -> Option<usize> {
        self.position.get(vertex).copied().flatten()
    }

    pub fn contains(&self, vertex: usize) -> bool {
        self.position(vertex).is_some()
    }

    /// Fracture edges from tip to boundary.
    pub fn edges(&self) -> impl Iterator<Item = [usize; 2]> + '_ {
        self.chain.windows(2).map(|w| [w[0], w[1]])
    }
}

/// One grid of the hierarchy.
#[derive(Debug, Clone)]
pub struct MeshLevel {
    /// Number of regular refinements applied to the file grid.
    pub depth: usize,
    pub points: Vec<Point>,
    pub elements: Vec<Element>,
    pub fracture: Option<Fracture>,
    pub boundary: Vec<BoundaryEdge>,
    /// Characteristic mesh size (longest edge of the file grid, halved per refinement).
    pub h: f64,
    pub refinement: Option<RefinementRecord>,
}

/// Unit tangent of the model fracture, pointing from the tip to the boundary.
pub fn fracture_tangent() -> [f64; 2] {
    let d = FRACTURE_END.sub(FRACTURE_TIP);
    let len = d[0].hypot(d[1]);
    [d[0] / len, d[1] / len]
}

/// Side of the fracture line on which `p` lies; `None` on the line itself.
pub fn fracture_side(p: Point) -> Option<Side> {
    let s = cross(fracture_tangent(), p.sub(FRACTURE_TIP));
    if s > GEOM_TOL {
        Some(Side::Upper)
    } else if s < -GEOM_TOL {
        Some(Side::Lower)
    } else {
        None
    }
}

impl MeshLevel {
    /// Build and validate a mesh from raw parts; `fracture_edges` must be
    /// an ordered chain from the tip to the boundary.
    pub fn from_parts(
        points: Vec<Point>,
        elements: Vec<Element>,
        fracture_edges: &[[usize; 2]],
        boundary: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        let fracture = if fracture_edges.is_empty() {
            None
        } else {
            Some(build_chain(&points, fracture_edges)?)
        };
        let h = elements
            .iter()
            .flat_map(|e| e.edges().map(|[a, b]| points[a].dist(points[b])).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        let mesh = MeshLevel {
            depth: 0,
            points,
            elements,
            fracture,
            boundary,
            h,
            refinement: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.points.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_points(&self, e: usize) -> Vec<Point> {
        self.elements[e]
            .vertices()
            .iter()
            .map(|&v| self.points[v])
            .collect()
    }

    pub fn element_area(&self, e: usize) -> f64 {
        polygon_area(&self.element_points(e))
    }

    pub fn element_centroid(&self, e: usize) -> Point {
        let pts = self.element_points(e);
        let n = pts.len() as f64;
        Point::new(
            pts.iter().map(|p| p.x).sum::<f64>() / n,
            pts.iter().map(|p| p.y).sum::<f64>() / n,
        )
    }

    pub fn total_area(&self) -> f64 {
        (0..self.elements.len()).map(|e| self.element_area(e)).sum()
    }

    pub fn fracture_length(&self) -> f64 {
        self.fracture.as_ref().map_or(0.0, |f| {
            f.edges()
                .map(|[a, b]| self.points[a].dist(self.points[b]))
                .sum()
        })
    }

    /// Side of the fracture on which element `e` lies, if it touches a
    /// duplicated fracture vertex.
    pub fn element_side(&self, e: usize) -> Option<Side> {
        let f = self.fracture.as_ref()?;
        let touches = self.elements[e]
            .vertices()
            .iter()
            .any(|&v| f.contains(v) && v != f.tip());
        if touches {
            fracture_side(self.element_centroid(e))
        } else {
            None
        }
    }

    fn validate(&self) -> Result<()> {
        let nv = self.points.len();
        for (i, e) in self.elements.iter().enumerate() {
            if e.vertices().iter().any(|&v| v >= nv) {
                return Err(Error::MeshInvalid {
                    violation: "element references unknown vertex",
                    entity: i,
                });
            }
            let area = self.element_area(i);
            let scale = self
                .element_points(i)
                .iter()
                .map(|p| p.dist(self.points[e.vertices()[0]]))
                .fold(0.0, f64::max);
            if area.abs() <= 1e-12 * scale * scale.max(1e-300) || area.abs() < 1e-300 {
                return Err(Error::MeshInvalid {
                    violation: "degenerate element",
                    entity: i,
                });
            }
            if area < 0.0 {
                return Err(Error::MeshInvalid {
                    violation: "clockwise element",
                    entity: i,
                });
            }
        }

        // Conformity: interior edges have two neighbours, the rest lie on markers.
        let mut edge_count: HashMap<[usize; 2], usize> = HashMap::new();
        for e in &self.elements {
            for [a, b] in e.edges() {
                *edge_count.entry(sorted(a, b)).or_default() += 1;
            }
        }
        let mut marked: HashMap<[usize; 2], BoundaryMarker> = HashMap::new();
        for (i, be) in self.boundary.iter().enumerate() {
            let [a, b] = be.vertices;
            if a >= nv || b >= nv {
                return Err(Error::MeshInvalid {
                    violation: "boundary edge references unknown vertex",
                    entity: i,
                });
            }
            if !be.marker.holds(self.points[a]) || !be.marker.holds(self.points[b]) {
                return Err(Error::MeshInvalid {
                    violation: "boundary edge off its marked side",
                    entity: i,
                });
            }
            if edge_count.get(&sorted(a, b)) != Some(&1) {
                return Err(Error::MeshInvalid {
                    violation: "boundary edge is not an outer element edge",
                    entity: i,
                });
            }
            marked.insert(sorted(a, b), be.marker);
        }
        let mut keys: Vec<_> = edge_count.iter().collect();
        keys.sort();
        for (edge, &count) in keys {
            if count > 2 {
                return Err(Error::MeshInvalid {
                    violation: "edge shared by more than two elements",
                    entity: edge[0],
                });
            }
            if count == 1 && !marked.contains_key(edge) {
                return Err(Error::MeshInvalid {
                    violation: "outer edge without boundary marker",
                    entity: edge[0],
                });
            }
        }
        let area = self.total_area();
        let expected = (X_MAX - X_MIN) * (Y_MAX - Y_MIN);
        if ((area - expected) / expected).abs() > 1e-12 {
            return Err(Error::MeshInvalid {
                violation: "elements do not tile the domain",
                entity: 0,
            });
        }

        if let Some(f) = &self.fracture {
            for (k, [a, b]) in f.edges().enumerate() {
                if edge_count.get(&sorted(a, b)) != Some(&2) {
                    return Err(Error::MeshInvalid {
                        violation: "fracture edge is not an interior grid edge",
                        entity: k,
                    });
                }
                for v in [a, b] {
                    if segment_distance(self.points[v], FRACTURE_TIP, FRACTURE_END) > GEOM_TOL {
                        return Err(Error::MeshInvalid {
                            violation: "fracture vertex off the fracture segment",
                            entity: v,
                        });
                    }
                }
            }
            if self.points[f.tip()].dist(FRACTURE_TIP) > GEOM_TOL {
                return Err(Error::MeshInvalid {
                    violation: "fracture does not start at the immersed tip",
                    entity: f.tip(),
                });
            }
            let end = f.boundary_vertex();
            if self.points[end].dist(FRACTURE_END) > GEOM_TOL {
                return Err(Error::MeshInvalid {
                    violation: "fracture does not end on the right boundary",
                    entity: end,
                });
            }
        }
        Ok(())
    }

    /// Regular refinement: every element into four, every edge into two.
    pub fn refine(&self) -> MeshLevel {
        let mut points = self.points.clone();
        let mut parents: Vec<VertexParent> = (0..points.len()).map(VertexParent::Vertex).collect();
        let mut midpoints: HashMap<[usize; 2], usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, points: &mut Vec<Point>, parents: &mut Vec<VertexParent>| {
            *midpoints.entry(sorted(a, b)).or_insert_with(|| {
                points.push(points[a].midpoint(points[b]));
                parents.push(VertexParent::Edge(sorted(a, b)));
                points.len() - 1
            })
        };

        let mut elements = Vec::with_capacity(4 * self.elements.len());
        let mut element_parents = Vec::with_capacity(4 * self.elements.len());
        for (ei, e) in self.elements.iter().enumerate() {
            match *e {
                Element::Triangle([a, b, c]) => {
                    let ab = midpoint(a, b, &mut points, &mut parents);
                    let bc = midpoint(b, c, &mut points, &mut parents);
                    let ca = midpoint(c, a, &mut points, &mut parents);
                    elements.push(Element::Triangle([a, ab, ca]));
                    elements.push(Element::Triangle([ab, b, bc]));
                    elements.push(Element::Triangle([ca, bc, c]));
                    elements.push(Element::Triangle([ab, bc, ca]));
                }
                Element::Quadrilateral([a, b, c, d]) => {
                    let ab = midpoint(a, b, &mut points, &mut parents);
                    let bc = midpoint(b, c, &mut points, &mut parents);
                    let cd = midpoint(c, d, &mut points, &mut parents);
                    let da = midpoint(d, a, &mut points, &mut parents);
                    let pa = points[a];
                    let (pb, pc, pd) = (points[b], points[c], points[d]);
                    points.push(Point::new(
                        0.25 * (pa.x + pb.x + pc.x + pd.x),
                        0.25 * (pa.y + pb.y + pc.y + pd.y),
                    ));
                    parents.push(VertexParent::Center([a, b, c, d]));
                    let o = points.len() - 1;
                    elements.push(Element::Quadrilateral([a, ab, o, da]));
                    elements.push(Element::Quadrilateral([ab, b, bc, o]));
                    elements.push(Element::Quadrilateral([o, bc, c, cd]));
                    elements.push(Element::Quadrilateral([da, o, cd, d]));
                }
            }
            element_parents.extend([ei; 4]);
        }

        let fracture = self.fracture.as_ref().map(|f| {
            let mut chain = Vec::with_capacity(2 * f.chain.len() - 1);
            for [a, b] in f.edges() {
                chain.push(a);
                chain.push(midpoints[&sorted(a, b)]);
            }
            chain.push(f.boundary_vertex());
            Fracture::from_chain(chain, points.len())
        });
        let boundary = self
            .boundary
            .iter()
            .flat_map(|be| {
                let [a, b] = be.vertices;
                let m = midpoints[&sorted(a, b)];
                [
                    BoundaryEdge { vertices: [a, m], marker: be.marker },
                    BoundaryEdge { vertices: [m, b], marker: be.marker },
                ]
            })
            .collect();

        MeshLevel {
            depth: self.depth + 1,
            points,
            elements,
            fracture,
            boundary,
            h: 0.5 * self.h,
            refinement: Some(RefinementRecord {
                vertex_parents: parents,
                element_parents,
                parent_vertices: self.points.len(),
                parent_elements: self.elements.len(),
            }),
        }
    }

    /// Vertices lying on a boundary edge with the given marker, sorted.
    pub fn boundary_vertices(&self, marker: BoundaryMarker) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary
            .iter()
            .filter(|b| b.marker == marker)
            .flat_map(|b| b.vertices)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Find the element containing `p` and the interpolation weights of its
    /// vertices (barycentric on triangles, bilinear on quadrilaterals).
    pub fn locate_point(&self, p: Point) -> Result<LocatedPoint> {
        if p.x < X_MIN - GEOM_TOL || p.x > X_MAX + GEOM_TOL || p.y < Y_MIN - GEOM_TOL || p.y > Y_MAX + GEOM_TOL {
            return Err(Error::PointOutside { x: p.x, y: p.y });
        }
        if self.fracture.is_some() && segment_distance(p, FRACTURE_TIP, FRACTURE_END) <= 1e-10 {
            return Err(Error::PointOnFracture { x: p.x, y: p.y });
        }
        for e in 0..self.elements.len() {
            if let Some(weights) = self.local_weights(e, p) {
                return Ok(LocatedPoint { element: e, weights });
            }
        }
        Err(Error::PointOutside { x: p.x, y: p.y })
    }

    /// Interpolation weights of `p` in element `e`, or `None` if outside.
    pub(crate) fn local_weights(&self, e: usize, p: Point) -> Option<Vec<f64>> {
        const TOL: f64 = 1e-10;
        let pts = self.element_points(e);
        let (min_x, max_x, min_y, max_y) = pts.iter().fold(
            (f64::MAX, f64::MIN, f64::MAX, f64::MIN),
            |(a, b, c, d), q| (a.min(q.x), b.max(q.x), c.min(q.y), d.max(q.y)),
        );
        if p.x < min_x - TOL || p.x > max_x + TOL || p.y < min_y - TOL || p.y > max_y + TOL {
            return None;
        }
        match self.elements[e] {
            Element::Triangle(_) => {
                let w = barycentric(&pts, p);
                if w.iter().all(|&x| x >= -TOL) {
                    Some(w.to_vec())
                } else {
                    None
                }
            }
            Element::Quadrilateral(_) => {
                let (xi, eta) = inverse_bilinear(&pts, p)?;
                if xi.abs() <= 1.0 + TOL && eta.abs() <= 1.0 + TOL {
                    Some(bilinear_shape(xi, eta).to_vec())
                } else {
                    None
                }
            }
        }
    }
}

impl Fracture {
    fn from_chain(chain: Vec<usize>, num_vertices: usize) -> Self {
        let mut position = vec![None; num_vertices];
        for (k, &v) in chain.iter().enumerate() {
            position[v] = Some(k);
        }
        Fracture { chain, position }
    }
}

fn build_chain(points: &[Point], edges: &[[usize; 2]]) -> Result<Fracture> {
    let mut chain = vec![edges[0][0], edges[0][1]];
    for (k, e) in edges.iter().enumerate().skip(1) {
        if e[0] != *chain.last().unwrap() {
            return Err(Error::MeshInvalid {
                violation: "fracture polyline is not connected",
                entity: k,
            });
        }
        chain.push(e[1]);
    }
    let mut seen = chain.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != chain.len() {
        return Err(Error::MeshInvalid {
            violation: "fracture polyline revisits a vertex",
            entity: 0,
        });
    }
    if let Some(&v) = chain.iter().find(|&&v| v >= points.len()) {
        return Err(Error::MeshInvalid {
            violation: "fracture edge references unknown vertex",
            entity: v,
        });
    }
    Ok(Fracture::from_chain(chain, points.len()))
}

/// Element and vertex weights for a located point.
#[derive(Debug, Clone, PartialEq)]
pub struct LocatedPoint {
    pub element: usize,
    /// One weight per element vertex, summing to 1.
    pub weights: Vec<f64>,
}

pub(crate) fn sorted(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

pub(crate) fn polygon_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    0.5 * (0..n)
        .map(|i| {
            let (p, q) = (pts[i], pts[(i + 1) % n]);
            p.x * q.y - q.x * p.y
        })
        .sum::<f64>()
}

pub(crate) fn barycentric(pts: &[Point], p: Point) -> [f64; 3] {
    let area = cross(pts[1].sub(pts[0]), pts[2].sub(pts[0]));
    let w1 = cross(pts[2].sub(pts[1]), p.sub(pts[1])) / area;
    let w2 = cross(pts[0].sub(pts[2]), p.sub(pts[2])) / area;
    [w1, w2, 1.0 - w1 - w2]
}

/// Bilinear shape functions on the reference square `[-1, 1]^2`, vertices
/// ordered counterclockwise from `(-1, -1)`.
pub(crate) fn bilinear_shape(xi: f64, eta: f64) -> [f64; 4] {
    [
        0.25 * (1.0 - xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 + eta),
        0.25 * (1.0 - xi) * (1.0 + eta),
    ]
}

/// Reference-coordinate derivatives `[d/dxi, d/deta]` of the bilinear shapes.
pub(crate) fn bilinear_shape_derivatives(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-0.25 * (1.0 - eta), -0.25 * (1.0 - xi)],
        [0.25 * (1.0 - eta), -0.25 * (1.0 + xi)],
        [0.25 * (1.0 + eta), 0.25 * (1.0 + xi)],
        [-0.25 * (1.0 + eta), 0.25 * (1.0 - xi)],
    ]
}

pub(crate) fn bilinear_map(pts: &[Point], xi: f64, eta: f64) -> Point {
    let n = bilinear_shape(xi, eta);
    Point::new(
        (0..4).map(|k| n[k] * pts[k].x).sum(),
        (0..4).map(|k| n[k] * pts[k].y).sum(),
    )
}

/// Jacobian `d(x, y)/d(xi, eta)` as rows `[dx/dxi, dx/deta]`, `[dy/dxi, dy/deta]`.
pub(crate) fn bilinear_jacobian(pts: &[Point], xi: f64, eta: f64) -> [[f64; 2]; 2] {
    let d = bilinear_shape_derivatives(xi, eta);
    let mut j = [[0.0; 2]; 2];
    for k in 0..4 {
        j[0][0] += d[k][0] * pts[k].x;
        j[0][1] += d[k][1] * pts[k].x;
        j[1][0] += d[k][0] * pts[k].y;
        j[1][1] += d[k][1] * pts[k].y;
    }
    j
}

/// Newton inversion of the bilinear map; `None` if it fails to converge.
pub(crate) fn inverse_bilinear(pts: &[Point], p: Point) -> Option<(f64, f64)> {
    let (mut xi, mut eta) = (0.0, 0.0);
    for _ in 0..30 {
        let q = bilinear_map(pts, xi, eta);
        let r = [p.x - q.x, p.y - q.y];
        let j = bilinear_jacobian(pts, xi, eta);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            return None;
        }
        let dxi = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let deta = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        xi += dxi;
        eta += deta;
        if dxi.abs() + deta.abs() < 1e-14 {
            return Some((xi, eta));
        }
        if xi.abs() > 10.0 || eta.abs() > 10.0 {
            return None;
        }
    }
    Some((xi, eta))
}

/// The grid sequence from the file grid up to the finest simulation level.
///
/// Grids below level 0 (present when the mesh file asks for refinements
/// before level 0) serve only as coarse spaces for the multigrid
/// preconditioner.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    grids: Vec<MeshLevel>,
    dofs: Vec<DofMap>,
    transfers: Vec<TransferOperator>,
    level0: usize,
}

impl MeshHierarchy {
    /// Refine the coarse grid until simulation level `max_level` exists.
    pub fn new(coarse: CoarseMesh, max_level: usize) -> Result<Self> {
        let mut grids = vec![coarse.grid];
        let total = coarse.level0_refinements + max_level;
        for _ in 0..total {
            let next = grids.last().unwrap().refine();
            grids.push(next);
        }
        let dofs: Vec<DofMap> = grids.iter().map(DofMap::build).collect();
        let transfers = grids
            .windows(2)
            .zip(dofs.windows(2))
            .map(|(g, d)| build_transfer(&g[0], &d[0], &g[1], &d[1]))
            .collect::<Result<Vec<_>>>()?;
        Ok(MeshHierarchy {
            grids,
            dofs,
            transfers,
            level0: coarse.level0_refinements,
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>, max_level: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::new(parse_coarse_mesh(&text)?, max_level)
    }

    /// Highest simulation level available.
    pub fn max_level(&self) -> usize {
        self.grids.len() - 1 - self.level0
    }

    pub fn level(&self, level: usize) -> &MeshLevel {
        &self.grids[self.level0 + level]
    }

    pub fn dofs(&self, level: usize) -> &DofMap {
        &self.dofs[self.level0 + level]
    }

    /// Index into the grid sequence of simulation `level`.
    pub fn grid_index(&self, level: usize) -> usize {
        self.level0 + level
    }

    pub fn grids(&self) -> &[MeshLevel] {
        &self.grids
    }

    pub fn grid_dofs(&self) -> &[DofMap] {
        &self.dofs
    }

    /// Interpolation from grid `k` to grid `k + 1` of the full sequence.
    pub fn grid_transfer(&self, k: usize) -> &TransferOperator {
        &self.transfers[k]
    }

    /// Transfers from the coarsest grid up to simulation `level`.
    pub fn transfers_to(&self, level: usize) -> &[TransferOperator] {
        &self.transfers[..self.level0 + level]
    }

    /// Interpolation from simulation level `level` to `level + 1`.
    pub fn transfer(&self, level: usize) -> &TransferOperator {
        &self.transfers[self.level0 + level]
    }
}

#[cfg(test)]
pub(crate) mod test_meshes {
    use super::*;

    /// Structured mesh over the domain; quads left of `x = 1`, triangles
    /// right of it, with the fracture on grid edges when `with_fracture`.
    /// Columns are `nx` (even) cells wide, rows are split `nb` below and `na`
    /// above the fracture line.
    pub fn mapped_grid(nx: usize, nb: usize, na: usize, with_fracture: bool) -> MeshLevel {
        assert!(nx.is_multiple_of(2));
        let ny = nb + na;
        let mut points = Vec::new();
        let line_y = |x: f64| {
            if x <= 1.0 {
                FRACTURE_TIP.y
            } else {
                FRACTURE_TIP.y + (FRACTURE_END.y - FRACTURE_TIP.y) * (x - 1.0)
            }
        };
        for i in 0..=nx {
            let x = X_MIN + (X_MAX - X_MIN) * i as f64 / nx as f64;
            let yl = line_y(x);
            for j in 0..=ny {
                let y = if j <= nb {
                    Y_MIN + (yl - Y_MIN) * j as f64 / nb as f64
                } else {
                    yl + (Y_MAX - yl) * (j - nb) as f64 / na as f64
                };
                points.push(Point::new(x, y));
            }
        }
        let id = |i: usize, j: usize| i * (ny + 1) + j;
        let mut elements = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                if 2 * i < nx {
                    elements.push(Element::Quadrilateral([a, b, c, d]));
                } else {
                    elements.push(Element::Triangle([a, b, c]));
                    elements.push(Element::Triangle([a, c, d]));
                }
            }
        }
        let mut boundary = Vec::new();
        for i in 0..nx {
            boundary.push(BoundaryEdge { vertices: [id(i, 0), id(i + 1, 0)], marker: BoundaryMarker::Bottom });
            boundary.push(BoundaryEdge { vertices: [id(i + 1, ny), id(i, ny)], marker: BoundaryMarker::Top });
        }
        for j in 0..ny {
            boundary.push(BoundaryEdge { vertices: [id(nx, j), id(nx, j + 1)], marker: BoundaryMarker::Right });
            boundary.push(BoundaryEdge { vertices: [id(0, j + 1), id(0, j)], marker: BoundaryMarker::Left });
        }
        let fracture: Vec<[usize; 2]> = if with_fracture {
            (nx / 2..nx).map(|i| [id(i, nb), id(i + 1, nb)]).collect()
        } else {
            Vec::new()
        };
        MeshLevel::from_parts(points, elements, &fracture, boundary).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_meshes::mapped_grid;
    use super::*;

    #[test]
    fn refine_quadruples_elements_and_halves_fracture_edges() {
        let m = mapped_grid(4, 2, 2, true);
        let tris = m.elements.iter().filter(|e| matches!(e, Element::Triangle(_))).count();
        let r = m.refine();
        let rtris = r.elements.iter().filter(|e| matches!(e, Element::Triangle(_))).count();
        assert_eq!(r.num_elements(), 4 * m.num_elements());
        assert_eq!(rtris, 4 * tris);
        let f = m.fracture.as_ref().unwrap();
        let rf = r.fracture.as_ref().unwrap();
        assert_eq!(f.chain.len() - 1, 2);
        assert_eq!(rf.chain.len() - 1, 4);
        assert_eq!(r.points[rf.tip()], FRACTURE_TIP);
        assert_eq!(r.points[rf.boundary_vertex()], FRACTURE_END);
        assert_eq!(r.h, 0.5 * m.h);
        assert_eq!(r.boundary.len(), 2 * m.boundary.len());
    }

    #[test]
    fn refinement_preserves_area_and_fracture_length() {
        let mut m = mapped_grid(4, 2, 3, true);
        let len = (1.0f64 + 0.04).sqrt();
        for _ in 0..3 {
            assert!((m.total_area() - 2.0).abs() <= 2e-12);
            assert!((m.fracture_length() - len).abs() <= 1e-12);
            m = m.refine();
            m.validate().unwrap();
        }
    }

    #[test]
    fn degenerate_element_rejected() {
        let ok = mapped_grid(2, 1, 1, false);
        let mut points = ok.points.clone();
        // Collapse a vertex onto its neighbour to zero an element's area.
        let mut elements = ok.elements.clone();
        points.push(points[0]);
        let n = points.len() - 1;
        elements.push(Element::Triangle([0, 1, n]));
        let err = MeshLevel::from_parts(points, elements, &[], ok.boundary.clone()).unwrap_err();
        assert!(err.to_string().contains("degenerate element"), "{err}");
    }

    #[test]
    fn locate_vertex_and_centroid() {
        let m = mapped_grid(4, 2, 2, true);
        let v = 7;
        let loc = m.locate_point(m.points[v]).unwrap();
        let verts = m.elements[loc.element].vertices();
        let k = verts.iter().position(|&u| u == v).unwrap();
        assert!((loc.weights[k] - 1.0).abs() < 1e-12);
        let tri = m.elements.iter().position(|e| matches!(e, Element::Triangle(_))).unwrap();
        let c = m.element_centroid(tri);
        let loc = m.locate_point(c).unwrap();
        assert_eq!(loc.element, tri);
        for w in &loc.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn locate_rejects_fracture_and_outside() {
        let m = mapped_grid(4, 2, 2, true);
        assert!(matches!(m.locate_point(Point::new(1.5, -0.6)), Err(Error::PointOnFracture { .. })));
        assert!(matches!(m.locate_point(Point::new(2.5, -0.6)), Err(Error::PointOutside { .. })));
        let loc = m.locate_point(Point::new(1.1, -0.8)).unwrap();
        assert_eq!(fracture_side(m.element_centroid(loc.element)), Some(Side::Lower));
    }
}
