use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{TriangleMesh, Vec3};

/// Parametric stand-in shapes, centered on their bounding-box center with
/// the object z axis up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrimitiveShape {
    Box {
        size: [f64; 3],
    },
    /// Axis along object z.
    Cylinder {
        diameter: f64,
        height: f64,
        segments: usize,
    },
    /// Three orthogonal arms of distinct lengths meeting at a corner cube of
    /// side `thickness`. Chiral when the arm lengths differ.
    Lshape {
        arms: [f64; 3],
        thickness: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimitiveKind {
    Box,
    Cylinder,
    Lshape,
}

/// `dims`: box `[x, y, z]`; cylinder `[diameter, height]`; lshape
/// `[arm_x, arm_y, arm_z, thickness]`. `tessellation` is the cylinder's
/// segment count and is ignored otherwise.
pub fn make_primitive(kind: PrimitiveKind, dims: &[f64], tessellation: usize) -> Result<TriangleMesh> {
    let need = match kind {
        PrimitiveKind::Box => 3,
        PrimitiveKind::Cylinder => 2,
        PrimitiveKind::Lshape => 4,
    };
    if dims.len() != need {
        return Err(Error::Invalid(format!("{kind:?} needs {need} dimensions, got {}", dims.len())));
    }
    let shape = match kind {
        PrimitiveKind::Box => PrimitiveShape::Box {
            size: [dims[0], dims[1], dims[2]],
        },
        PrimitiveKind::Cylinder => PrimitiveShape::Cylinder {
            diameter: dims[0],
            height: dims[1],
            segments: tessellation,
        },
        PrimitiveKind::Lshape => PrimitiveShape::Lshape {
            arms: [dims[0], dims[1], dims[2]],
            thickness: dims[3],
        },
    };
    shape.mesh()
}

impl PrimitiveShape {
    pub fn mesh(&self) -> Result<TriangleMesh> {
        self.validate()?;
        match *self {
            PrimitiveShape::Box { size } => Ok(box_mesh(size)),
            PrimitiveShape::Cylinder {
                diameter,
                height,
                segments,
            } => Ok(cylinder_mesh(diameter, height, segments)),
            PrimitiveShape::Lshape { arms, thickness } => Ok(lshape_mesh(arms, thickness)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |vals: &[f64]| vals.iter().all(|v| v.is_finite() && *v > 0.0);
        let ok = match *self {
            PrimitiveShape::Box { size } => positive(&size),
            PrimitiveShape::Cylinder {
                diameter,
                height,
                segments,
            } => positive(&[diameter, height]) && segments >= 3,
            PrimitiveShape::Lshape { arms, thickness } => {
                positive(&arms) && thickness > 0.0 && arms.iter().all(|&a| a > thickness)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid primitive dimensions: {self:?}")))
        }
    }

    /// Extent along object z.
    pub fn height(&self) -> f64 {
        match *self {
            PrimitiveShape::Box { size } => size[2],
            PrimitiveShape::Cylinder { height, .. } => height,
            PrimitiveShape::Lshape { arms, .. } => arms[2],
        }
    }

    /// Radius of the footprint in the object xy plane.
    pub fn footprint_radius(&self) -> f64 {
        match *self {
            PrimitiveShape::Box { size } => 0.5 * size[0].hypot(size[1]),
            PrimitiveShape::Cylinder { diameter, .. } => 0.5 * diameter,
            PrimitiveShape::Lshape { arms, .. } => 0.5 * arms[0].hypot(arms[1]),
        }
    }

    /// Whether pose error should be measured with ADD-S: true for shapes
    /// with a nontrivial rotational symmetry. A box is unchanged by half
    /// turns about its axes, so depth alone cannot tell those poses apart.
    pub fn is_symmetric(&self) -> bool {
        !matches!(self, PrimitiveShape::Lshape { .. })
    }
}

fn box_mesh(size: [f64; 3]) -> TriangleMesh {
    let h = Vec3::new(size[0], size[1], size[2]) * 0.5;
    let vertices: Vec<Vec3> = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            )
        })
        .collect();
    // Outward-facing (counter-clockwise seen from outside).
    let triangles = vec![
        [0, 2, 1], [1, 2, 3], // -z
        [4, 5, 6], [5, 7, 6], // +z
        [0, 1, 4], [1, 5, 4], // -y
        [2, 6, 3], [3, 6, 7], // +y
        [0, 4, 2], [2, 4, 6], // -x
        [1, 3, 5], [3, 7, 5], // +x
    ];
    TriangleMesh::new(vertices, triangles).expect("box mesh is valid")
}

fn cylinder_mesh(diameter: f64, height: f64, segments: usize) -> TriangleMesh {
    let r = 0.5 * diameter;
    let hz = 0.5 * height;
    let n = segments;
    let mut vertices = Vec::with_capacity(2 * n + 2);
    for z in [-hz, hz] {
        for i in 0..n {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            vertices.push(Vec3::new(r * a.cos(), r * a.sin(), z));
        }
    }
    let bottom = 2 * n;
    let top = 2 * n + 1;
    vertices.push(Vec3::new(0.0, 0.0, -hz));
    vertices.push(Vec3::new(0.0, 0.0, hz));
    let mut triangles = Vec::with_capacity(4 * n);
    for i in 0..n {
        let j = (i + 1) % n;
        triangles.push([i, j, n + j]);
        triangles.push([i, n + j, n + i]);
        triangles.push([bottom, j, i]);
        triangles.push([top, n + i, n + j]);
    }
    TriangleMesh::new(vertices, triangles).expect("cylinder mesh is valid")
}

/// Boundary of a union of grid cells; shared grid points make it watertight.
fn lshape_mesh(arms: [f64; 3], t: f64) -> TriangleMesh {
    let coords = [[0.0, t, arms[0]], [0.0, t, arms[1]], [0.0, t, arms[2]]];
    let filled = |c: [i32; 3]| -> bool {
        if c.iter().any(|&x| !(0..2).contains(&x)) {
            return false;
        }
        matches!(c, [0, 0, 0] | [1, 0, 0] | [0, 1, 0] | [0, 0, 1])
    };
    let center = Vec3::new(arms[0], arms[1], arms[2]) * 0.5;

    let mut index = [usize::MAX; 27];
    let mut vertices = Vec::new();
    let mut vid = |g: [usize; 3], vertices: &mut Vec<Vec3>| -> usize {
        let key = (g[0] * 3 + g[1]) * 3 + g[2];
        if index[key] == usize::MAX {
            index[key] = vertices.len();
            vertices.push(Vec3::new(coords[0][g[0]], coords[1][g[1]], coords[2][g[2]]) - center);
        }
        index[key]
    };

    let mut triangles = Vec::new();
    for cell in [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]] {
        for axis in 0..3 {
            for dir in [-1i32, 1] {
                let mut nb = cell;
                nb[axis] += dir;
                if filled(nb) {
                    continue;
                }
                // Face at grid plane `cell[axis] + (dir > 0)` along `axis`.
                let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
                let plane = (cell[axis] + (dir > 0) as i32) as usize;
                let corner = |s: usize, r: usize| {
                    let mut g = [0usize; 3];
                    g[axis] = plane;
                    g[a1] = cell[a1] as usize + s;
                    g[a2] = cell[a2] as usize + r;
                    g
                };
                let q = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                let ids = q.map(|g| vid(g, &mut vertices));
                // (a1, a2, axis) is right-handed, so this order faces +axis.
                if dir > 0 {
                    triangles.push([ids[0], ids[1], ids[2]]);
                    triangles.push([ids[0], ids[2], ids[3]]);
                } else {
                    triangles.push([ids[0], ids[2], ids[1]]);
                    triangles.push([ids[0], ids[3], ids[2]]);
                }
            }
        }
    }
    TriangleMesh::new(vertices, triangles).expect("lshape mesh is valid")
}
