//! Reader for the ASCII coarse-mesh format.
//!
//! ```text
//! # comment
//! LEVEL0_REFINEMENTS 1        (optional, default 0)
//! VERTICES <n>
//! <id> <x> <y>
//! ELEMENTS <n>
//! <id> tri <a> <b> <c>
//! <id> quad <a> <b> <c> <d>
//! FRACTURE_EDGES <n>
//! <a> <b>
//! BOUNDARY_EDGES <n>
//! <a> <b> left|right|top|bottom
//! ```
//!
//! Ids are 0-based and contiguous, elements are counterclockwise, fracture
//! edges run from the immersed tip to the boundary. `LEVEL0_REFINEMENTS`
//! refines the file grid that many times to obtain simulation level 0; the
//! unrefined grids are kept as multigrid coarse spaces.

use std::path::Path;

use super::{BoundaryEdge, BoundaryMarker, Element, MeshLevel, Point};
use crate::error::{Error, Result};

/// The grid stored in a mesh file plus its level-0 refinement count.
#[derive(Debug, Clone)]
pub struct CoarseMesh {
    pub grid: MeshLevel,
    pub level0_refinements: usize,
}

impl CoarseMesh {
    /// The simulation level-0 grid.
    pub fn level0(&self) -> MeshLevel {
        let mut m = self.grid.clone();
        for _ in 0..self.level0_refinements {
            m = m.refine();
        }
        m.depth = self.level0_refinements;
        m
    }
}

/// Read a mesh file and return the validated level-0 grid.
pub fn load_coarse_mesh(path: impl AsRef<Path>) -> Result<MeshLevel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_coarse_mesh(&text)?.level0())
}

#[derive(PartialEq, Clone, Copy)]
enum Section {
    None,
    Vertices,
    Elements,
    Fracture,
    Boundary,
}

pub fn parse_coarse_mesh(text: &str) -> Result<CoarseMesh> {
    let mut section = Section::None;
    let mut remaining = 0usize;
    let mut refinements = 0usize;
    let mut points = Vec::new();
    let mut elements = Vec::new();
    let mut fracture = Vec::new();
    let mut boundary = Vec::new();
    let mut seen = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| Error::MeshParse { line: line_no, message };
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();

        if remaining == 0 {
            let count = |tok: &[&str]| -> Result<usize> {
                match tok {
                    [_, n] => n.parse().map_err(|_| err(format!("bad count `{n}`"))),
                    _ => Err(err(format!("expected `{} <count>`", tok[0]))),
                }
            };
            let next = match tok[0] {
                "LEVEL0_REFINEMENTS" => {
                    refinements = count(&tok)?;
                    continue;
                }
                "VERTICES" => Section::Vertices,
                "ELEMENTS" => Section::Elements,
                "FRACTURE_EDGES" => Section::Fracture,
                "BOUNDARY_EDGES" => Section::Boundary,
                other => return Err(err(format!("unexpected `{other}`"))),
            };
            if seen.contains(&(next as u8)) {
                return Err(err(format!("duplicate section `{}`", tok[0])));
            }
            seen.push(next as u8);
            section = next;
            remaining = count(&tok)?;
            continue;
        }

        let int = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| err(format!("bad integer `{s}`")))
        };
        let float = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("bad coordinate `{s}`")))
        };
        match section {
            Section::Vertices => {
                let [id, x, y] = tok[..] else {
                    return Err(err("expected `<id> <x> <y>`".into()));
                };
                if int(id)? != points.len() {
                    return Err(err(format!("vertex id {id} out of sequence")));
                }
                points.push(Point::new(float(x)?, float(y)?));
            }
            Section::Elements => {
                if tok.len() < 2 || int(tok[0])? != elements.len() {
                    return Err(err("element id missing or out of sequence".into()));
                }
                let ids = tok[2..].iter().map(|s| int(s)).collect::<Result<Vec<_>>>()?;
                elements.push(match (tok[1], ids.as_slice()) {
                    ("tri", &[a, b, c]) => Element::Triangle([a, b, c]),
                    ("quad", &[a, b, c, d]) => Element::Quadrilateral([a, b, c, d]),
                    (kind, _) => return Err(err(format!("bad element `{kind}` with {} vertices", ids.len()))),
                });
            }
            Section::Fracture => {
                let [a, b] = tok[..] else {
                    return Err(err("expected `<a> <b>`".into()));
                };
                fracture.push([int(a)?, int(b)?]);
            }
            Section::Boundary => {
                let [a, b, m] = tok[..] else {
                    return Err(err("expected `<a> <b> <marker>`".into()));
                };
                let marker = BoundaryMarker::parse(m).ok_or_else(|| err(format!("unknown marker `{m}`")))?;
                boundary.push(BoundaryEdge { vertices: [int(a)?, int(b)?], marker });
            }
            Section::None => unreachable!(),
        }
        remaining -= 1;
    }
    if remaining != 0 {
        return Err(Error::MeshParse {
            line: text.lines().count(),
            message: format!("{remaining} entries missing at end of file"),
        });
    }
    for (name, s) in [("VERTICES", Section::Vertices), ("ELEMENTS", Section::Elements), ("BOUNDARY_EDGES", Section::Boundary)] {
        if !seen.contains(&(s as u8)) {
            return Err(Error::MeshParse {
                line: text.lines().count(),
                message: format!("missing section `{name}`"),
            });
        }
    }
    let grid = MeshLevel::from_parts(points, elements, &fracture, boundary)?;
    Ok(CoarseMesh { grid, level0_refinements: refinements })
}

/// Serialize a grid in the format read by [`parse_coarse_mesh`].
pub fn write_coarse_mesh(mesh: &MeshLevel, level0_refinements: usize) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    if level0_refinements > 0 {
        writeln!(s, "LEVEL0_REFINEMENTS {level0_refinements}").unwrap();
    }
    writeln!(s, "VERTICES {}", mesh.points.len()).unwrap();
    for (i, p) in mesh.points.iter().enumerate() {
        writeln!(s, "{i} {:?} {:?}", p.x, p.y).unwrap();
    }
    writeln!(s, "ELEMENTS {}", mesh.elements.len()).unwrap();
    for (i, e) in mesh.elements.iter().enumerate() {
        let kind = match e {
            Element::Triangle(_) => "tri",
            Element::Quadrilateral(_) => "quad",
        };
        let ids: Vec<String> = e.vertices().iter().map(|v| v.to_string()).collect();
        writeln!(s, "{i} {kind} {}", ids.join(" ")).unwrap();
    }
    let edges: Vec<[usize; 2]> = mesh.fracture.as_ref().map_or(Vec::new(), |f| f.edges().collect());
    writeln!(s, "FRACTURE_EDGES {}", edges.len()).unwrap();
    for [a, b] in edges {
        writeln!(s, "{a} {b}").unwrap();
    }
    writeln!(s, "BOUNDARY_EDGES {}", mesh.boundary.len()).unwrap();
    for b in &mesh.boundary {
        writeln!(s, "{} {} {}", b.vertices[0], b.vertices[1], b.marker.name()).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::test_meshes::mapped_grid;

    #[test]
    fn round_trip() {
        let m = mapped_grid(4, 2, 2, true);
        let text = write_coarse_mesh(&m, 1);
        let c = parse_coarse_mesh(&text).unwrap();
        assert_eq!(c.level0_refinements, 1);
        assert_eq!(c.grid.points, m.points);
        assert_eq!(c.grid.elements, m.elements);
        assert_eq!(c.grid.fracture.as_ref().unwrap().chain, m.fracture.as_ref().unwrap().chain);
        assert_eq!(c.level0().num_elements(), 4 * m.num_elements());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "VERTICES 1\n0 0.0 abc\n";
        match parse_coarse_mesh(text) {
            Err(Error::MeshParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_coarse_mesh("FOO 3\n"), Err(Error::MeshParse { line: 1, .. })));
    }

    #[test]
    fn clockwise_element_rejected() {
        let m = mapped_grid(2, 1, 1, false);
        let mut text = write_coarse_mesh(&m, 0);
        let Element::Quadrilateral([a, b, c, d]) = m.elements[0] else { panic!() };
        text = text.replace(&format!("0 quad {a} {b} {c} {d}"), &format!("0 quad {d} {c} {b} {a}"));
        let err = parse_coarse_mesh(&text).unwrap_err();
        assert!(err.to_string().contains("clockwise"), "{err}");
    }

    #[test]
    fn fracture_off_segment_rejected() {
        let m = mapped_grid(4, 2, 2, false);
        let mut text = write_coarse_mesh(&m, 0);
        // Edge along y = -0.5 instead of the fracture line.
        text = text.replace("FRACTURE_EDGES 0", "FRACTURE_EDGES 1\n0 5");
        assert!(parse_coarse_mesh(&text).is_err());
    }
}
