//! Triangle meshes with optional per-vertex colors, plus Wavefront OBJ I/O.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Area below which a triangle is treated as degenerate.
pub const EPS_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    /// Per-vertex RGB in [0, 1]; either empty or one entry per vertex.
    pub colors: Option<Vec<Vector3<f64>>>,
}

impl TriangleMesh {
    /// Builds a mesh and checks the index invariants.
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriangleMesh {
            vertices,
            faces,
            colors: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_colors(mut self, colors: Vec<Vector3<f64>>) -> Result<Self> {
        if colors.len() != self.vertices.len() {
            return Err(Error::DimensionMismatch {
                expected: self.vertices.len(),
                actual: colors.len(),
            });
        }
        self.colors = Some(colors);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (j, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!("face {j} references a vertex >= {n}")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {j} repeats a vertex")));
            }
        }
        if let Some(c) = &self.colors {
            if c.len() != n {
                return Err(Error::InvalidMesh("color count differs from vertex count".into()));
            }
        }
        if self.vertices.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex".into()));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Returns the three corner positions of face `j`.
    pub fn triangle(&self, j: usize) -> Result<[Vector3<f64>; 3]> {
        let f = self.faces.get(j).ok_or(Error::FaceOutOfRange {
            face: j,
            count: self.faces.len(),
        })?;
        Ok([self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]])
    }

    pub fn same_topology(&self, other: &TriangleMesh) -> bool {
        self.vertices.len() == other.vertices.len() && self.faces == other.faces
    }

    pub fn face_area(&self, j: usize) -> f64 {
        let f = self.faces[j];
        let (a, b, c) = (self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Recenters the bounding box at the origin and scales so the farthest
    /// vertex lies on the unit sphere.
    pub fn normalize_to_unit_sphere(&mut self) {
        if self.vertices.is_empty() {
            return;
        }
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let center = (lo + hi) * 0.5;
        let radius = self.vertices.iter().map(|v| (v - center).norm()).fold(0.0, f64::max);
        let scale = if radius > 0.0 { 1.0 / radius } else { 1.0 };
        for v in &mut self.vertices {
            *v = (*v - center) * scale;
        }
    }

    pub fn max_vertex_norm(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Serializes to OBJ text; colored meshes use the `v x y z r g b` form.
    pub fn to_obj_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.vertices.iter().enumerate() {
            match &self.colors {
                Some(c) => {
                    let c = c[k];
                    let _ = writeln!(out, "v {} {} {} {} {} {}", v.x, v.y, v.z, c.x, c.y, c.z);
                }
                None => {
                    let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
                }
            }
        }
        for f in &self.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        out
    }

    pub fn write_obj<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_obj_string().as_bytes())?;
        Ok(())
    }

    pub fn save_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_obj_string())?;
        Ok(())
    }

    /// Parses OBJ `v` and `f` records. Polygons with more than three corners
    /// are rejected; texture/normal indices (`f 1/2/3 ...`) are ignored.
    pub fn read_obj<R: Read>(r: R) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut colors = Vec::new();
        let mut faces = Vec::new();
        for (lineno, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let mut it = line.split_whitespace();
            let bad = |what: &str| Error::Parse(format!("line {}: {what}", lineno + 1));
            match it.next() {
                Some("v") => {
                    let nums = it
                        .map(|s| s.parse::<f64>().map_err(|_| bad("invalid number")))
                        .collect::<Result<Vec<_>>>()?;
                    match nums.len() {
                        3 => vertices.push(Vector3::new(nums[0], nums[1], nums[2])),
                        6 | 7 => {
                            vertices.push(Vector3::new(nums[0], nums[1], nums[2]));
                            colors.push(Vector3::new(nums[3], nums[4], nums[5]));
                        }
                        4 => vertices.push(Vector3::new(nums[0], nums[1], nums[2])),
                        _ => return Err(bad("vertex needs 3 or 6 components")),
                    }
                }
                Some("f") => {
                    let idx = it
                        .map(|s| {
                            let head = s.split('/').next().unwrap_or("");
                            let i: i64 = head.parse().map_err(|_| bad("invalid index"))?;
                            if i > 0 {
                                Ok((i - 1) as usize)
                            } else if i < 0 && (-i) as usize <= vertices.len() {
                                Ok(vertices.len() - (-i) as usize)
                            } else {
                                Err(bad("invalid index"))
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    if idx.len() != 3 {
                        return Err(bad("only triangular faces are supported"));
                    }
                    faces.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
        let colors = if colors.is_empty() {
            None
        } else if colors.len() == vertices.len() {
            Some(colors)
        } else {
            return Err(Error::Parse("vertex colors present on only some vertices".into()));
        };
        let mesh = TriangleMesh {
            vertices,
            faces,
            colors,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_obj(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_indices() {
        let v = tri().vertices;
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriangleMesh::new(v, vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn obj_round_trip_is_exact() {
        let mut m = tri();
        m.vertices[1].x = 0.1 + 0.2;
        m.vertices[2].z = -1.0 / 3.0;
        let m = m.with_colors(vec![Vector3::new(0.25, 0.5, 1.0 / 7.0); 3]).unwrap();
        let back = TriangleMesh::read_obj(m.to_obj_string().as_bytes()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn obj_parses_slash_indices() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n";
        let m = TriangleMesh::read_obj(text.as_bytes()).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
        assert!(m.colors.is_none());
    }

    #[test]
    fn obj_rejects_quads() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n";
        assert!(TriangleMesh::read_obj(text.as_bytes()).is_err());
    }

    #[test]
    fn normalization_fits_unit_sphere() {
        let mut m = tri();
        for v in &mut m.vertices {
            *v = *v * 7.0 + Vector3::new(3.0, -2.0, 5.0);
        }
        m.normalize_to_unit_sphere();
        assert!((m.max_vertex_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_out_of_range() {
        assert!(matches!(tri().triangle(4), Err(Error::FaceOutOfRange { .. })));
    }
}
