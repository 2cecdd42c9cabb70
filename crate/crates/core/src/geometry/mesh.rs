use std::fmt::Write as _;
use std::path::Path;

use super::Vec3;
use crate::error::{Error, Result};

/// Triangle mesh in the object frame (meters) with its cached diameter.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    diameter: f64,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::Mesh("mesh has no triangles".into()));
        }
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Mesh(format!("vertex {i} is not finite")));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::Mesh(format!(
                    "triangle {t} references vertex {bad} of {}",
                    vertices.len()
                )));
            }
        }
        let diameter = max_pairwise_distance(&vertices);
        if diameter <= 0.0 {
            return Err(Error::Mesh("mesh has zero diameter".into()));
        }
        Ok(TriangleMesh {
            vertices,
            triangles,
            diameter,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Maximum distance between any two vertices.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Parses the `v x y z` / `f i j k` subset of Wavefront OBJ. Face entries
    /// may carry `/vt/vn` suffixes, which are ignored; every other line kind
    /// is skipped.
    pub fn parse_obj(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let lineno = n + 1;
            let err = |message: String| Error::Obj {
                line: lineno,
                message,
            };
            let mut fields = line.split_whitespace();
            match fields.next() {
                Some("v") => {
                    let coords = fields
                        .take(3)
                        .map(|f| f.parse::<f64>().map_err(|e| err(format!("bad coordinate '{f}': {e}"))))
                        .collect::<Result<Vec<_>>>()?;
                    if coords.len() != 3 {
                        return Err(err("vertex needs three coordinates".into()));
                    }
                    vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let idx = fields
                        .map(|f| {
                            let head = f.split('/').next().unwrap_or(f);
                            match head.parse::<usize>() {
                                Ok(i) if i >= 1 => Ok(i - 1),
                                _ => Err(err(format!("bad face index '{f}'"))),
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    if idx.len() != 3 {
                        return Err(err(format!("faces must be triangles, got {} indices", idx.len())));
                    }
                    triangles.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
        Self::new(vertices, triangles)
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_obj(&text)
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        out
    }

    pub fn write_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_obj()).map_err(|e| Error::io(path, e))
    }
}

fn max_pairwise_distance(vertices: &[Vec3]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in vertices.iter().enumerate() {
        for b in &vertices[i + 1..] {
            best = best.max((a - b).norm_squared());
        }
    }
    best.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TETRA: &str = "# tetrahedron\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nvn 0 0 1\nf 1 2 3\nf 1/1/1 2/2/2 4/4/4\nf 1 3 4\nf 2 3 4\n";

    #[test]
    fn parses_obj_subset() {
        let mesh = TriangleMesh::parse_obj(TETRA).unwrap();
        assert_eq!(mesh.vertices().len(), 4);
        assert_eq!(mesh.triangles()[1], [0, 1, 3]);
        assert!((mesh.diameter() - 2f64.sqrt()).abs() < 1e-15);
        let again = TriangleMesh::parse_obj(&mesh.to_obj()).unwrap();
        assert_eq!(again, mesh);
    }

    #[test]
    fn rejects_invalid_obj() {
        let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        assert!(matches!(TriangleMesh::parse_obj(quad), Err(Error::Obj { line: 5, .. })));
        assert!(TriangleMesh::parse_obj("v 0 0 0\nv 1 0 0\nf 1 2 3\n").is_err());
        assert!(TriangleMesh::parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n").is_err());
        assert!(TriangleMesh::parse_obj("v 0 0\n").is_err());
        assert!(TriangleMesh::parse_obj("v 0 0 0\n").is_err());
    }
}
