//! Dual-box geometry: sub-control volumes and faces per element, and the
//! 1D control volumes along the fracture.

use crate::mesh::{
    bilinear_jacobian, bilinear_shape, bilinear_shape_derivatives, cross, fracture_tangent, polygon_area,
    Element, MeshLevel, Point,
};

/// One sub-control-volume face, from an edge midpoint to the element barycenter.
#[derive(Debug, Clone)]
pub struct ScvFace {
    /// Local vertices `(from, to)`; the normal points from `from` to `to`.
    pub from: usize,
    pub to: usize,
    /// Normal scaled by the face length.
    pub normal: [f64; 2],
    /// Integration point (face midpoint).
    pub ip: Point,
    /// Shape values at the integration point.
    pub shape: Vec<f64>,
    /// Physical gradients of the shape functions at the integration point.
    pub grad: Vec<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct ElementBoxes {
    /// Sub-control volume of each local vertex.
    pub volumes: Vec<f64>,
    pub faces: Vec<ScvFace>,
}

/// Fracture control volumes along the chain.
#[derive(Debug, Clone)]
pub struct FractureGeometry {
    /// Edge lengths, edge `k` joins chain vertices `k` and `k + 1`.
    pub edge_length: Vec<f64>,
    /// Length of the 1D control volume of each chain vertex.
    pub cv_length: Vec<f64>,
    /// Unit tangent from the tip to the boundary.
    pub tangent: [f64; 2],
    /// Unit normals pointing from the fracture into side 1 and side 2.
    pub normals: [[f64; 2]; 2],
}

#[derive(Debug, Clone)]
pub struct BoxGeometry {
    pub elements: Vec<ElementBoxes>,
    pub fracture: Option<FractureGeometry>,
    /// Total control-volume size per vertex (sum over elements).
    pub vertex_volume: Vec<f64>,
}

impl BoxGeometry {
    pub fn new(mesh: &MeshLevel) -> Self {
        let elements: Vec<ElementBoxes> = (0..mesh.num_elements()).map(|e| element_boxes(mesh, e)).collect();
        let mut vertex_volume = vec![0.0; mesh.num_vertices()];
        for (e, b) in elements.iter().enumerate() {
            for (&v, &vol) in mesh.elements[e].vertices().iter().zip(&b.volumes) {
                vertex_volume[v] += vol;
            }
        }
        let fracture = mesh.fracture.as_ref().map(|f| {
            let edge_length: Vec<f64> = f.edges().map(|[a, b]| mesh.points[a].dist(mesh.points[b])).collect();
            let mut cv_length = vec![0.0; f.chain.len()];
            for (k, &l) in edge_length.iter().enumerate() {
                cv_length[k] += 0.5 * l;
                cv_length[k + 1] += 0.5 * l;
            }
            let t = fracture_tangent();
            FractureGeometry {
                edge_length,
                cv_length,
                tangent: t,
                normals: [[-t[1], t[0]], [t[1], -t[0]]],
            }
        });
        BoxGeometry { elements, fracture, vertex_volume }
    }
}

fn element_boxes(mesh: &MeshLevel, e: usize) -> ElementBoxes {
    let pts = mesh.element_points(e);
    let n = pts.len();
    let bary = mesh.element_centroid(e);
    let mids: Vec<Point> = (0..n).map(|k| pts[k].midpoint(pts[(k + 1) % n])).collect();
    let volumes = match mesh.elements[e] {
        Element::Triangle(_) => vec![polygon_area(&pts) / 3.0; 3],
        Element::Quadrilateral(_) => (0..n)
            .map(|k| polygon_area(&[pts[k], mids[k], bary, mids[(k + n - 1) % n]]))
            .collect(),
    };
    let faces = (0..n)
        .map(|k| {
            let (from, to) = (k, (k + 1) % n);
            let d = bary.sub(mids[k]);
            let mut normal = [d[1], -d[0]];
            if normal[0] * (pts[to].x - pts[from].x) + normal[1] * (pts[to].y - pts[from].y) < 0.0 {
                normal = [-normal[0], -normal[1]];
            }
            let ip = mids[k].midpoint(bary);
            let (shape, grad) = shape_at(&mesh.elements[e], &pts, k);
            ScvFace { from, to, normal, ip, shape, grad }
        })
        .collect();
    ElementBoxes { volumes, faces }
}

/// Shape values and gradients at the midpoint of face `k`.
fn shape_at(element: &Element, pts: &[Point], k: usize) -> (Vec<f64>, Vec<[f64; 2]>) {
    match element {
        Element::Triangle(_) => {
            let det = cross(pts[1].sub(pts[0]), pts[2].sub(pts[0]));
            let grad = (0..3)
                .map(|a| {
                    let (b, c) = (pts[(a + 1) % 3], pts[(a + 2) % 3]);
                    [(b.y - c.y) / det, (c.x - b.x) / det]
                })
                .collect();
            // Face midpoint: 1/2 (edge midpoint + barycenter).
            let mut shape = vec![1.0 / 6.0; 3];
            shape[k] += 0.25;
            shape[(k + 1) % 3] += 0.25;
            (shape, grad)
        }
        Element::Quadrilateral(_) => {
            const CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
            let (a, b) = (CORNERS[k], CORNERS[(k + 1) % 4]);
            let (xi, eta) = (0.25 * (a[0] + b[0]), 0.25 * (a[1] + b[1]));
            let j = bilinear_jacobian(pts, xi, eta);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let d = bilinear_shape_derivatives(xi, eta);
            let grad = d
                .iter()
                .map(|g| {
                    // Solve J^T grad = g.
                    [
                        (j[1][1] * g[0] - j[1][0] * g[1]) / det,
                        (-j[0][1] * g[0] + j[0][0] * g[1]) / det,
                    ]
                })
                .collect();
            (bilinear_shape(xi, eta).to_vec(), grad)
        }
    }
}
