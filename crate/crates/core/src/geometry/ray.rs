//! Rays, ray–triangle intersection and barycentric point sampling.

use nalgebra::{SMatrix, Vector3};

use super::mesh::{TriangleMesh, EPS_AREA};
use crate::error::{Error, Result};

/// Determinant magnitude below which a ray is treated as parallel to a triangle.
pub const EPS_PARALLEL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    /// Unit length.
    pub direction: Vector3<f64>,
}

impl Ray {
    /// Normalizes `direction`.
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Self {
        Ray {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

/// A point on a mesh face expressed by its barycentric weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycentricSample {
    pub face: usize,
    pub alpha: Vector3<f64>,
}

impl BarycentricSample {
    pub fn is_valid(&self) -> bool {
        self.alpha.iter().all(|&a| a >= 0.0) && (self.alpha.sum() - 1.0).abs() <= 1e-9
    }

    pub fn point(&self, mesh: &TriangleMesh) -> Result<Vector3<f64>> {
        let [a, b, c] = mesh.triangle(self.face)?;
        Ok(a * self.alpha.x + b * self.alpha.y + c * self.alpha.z)
    }
}

/// Möller–Trumbore intersection. Returns the ray distance and the barycentric
/// weights of the hit. Both triangle orientations are accepted.
pub fn ray_triangle_intersect(ray: &Ray, tri: &[Vector3<f64>; 3]) -> Option<(f64, Vector3<f64>)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    if 0.5 * e1.cross(&e2).norm() <= EPS_AREA {
        return None;
    }
    let pvec = ray.direction.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < EPS_PARALLEL {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = ray.origin - tri[0];
    let u = tvec.dot(&pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = ray.direction.dot(&qvec) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    if t < 0.0 {
        return None;
    }
    Some((t, Vector3::new(1.0 - u - v, u, v)))
}

/// Points `V_j α` on face `face` for each weight vector.
pub fn sample_triangle_points(mesh: &TriangleMesh, face: usize, alphas: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>> {
    let [a, b, c] = mesh.triangle(face)?;
    alphas
        .iter()
        .map(|w| {
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidMesh("non-finite barycentric weight".into()));
            }
            Ok(a * w.x + b * w.y + c * w.z)
        })
        .collect()
}

/// `∂p/∂V` for `p = V α`: the 3×9 matrix `[α₀I α₁I α₂I]` over the stacked
/// corner coordinates.
pub fn barycentric_jacobian(alpha: &Vector3<f64>) -> SMatrix<f64, 3, 9> {
    let mut j = SMatrix::<f64, 3, 9>::zeros();
    for k in 0..3 {
        for d in 0..3 {
            j[(d, 3 * k + d)] = alpha[k];
        }
    }
    j
}

/// `∂p/∂V` for a point defined as the intersection of a fixed ray with the
/// plane of a moving triangle. The point only moves along the ray.
pub fn raycast_point_jacobian(ray: &Ray, tri: &[Vector3<f64>; 3], p: &Vector3<f64>) -> SMatrix<f64, 3, 9> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let n = e1.cross(&e2);
    let nd = n.dot(&ray.direction);
    let r = p - tri[0];
    // t = n·(v0 - o) / n·d; n·(p - v0) = 0 is held fixed.
    let mut dt = SMatrix::<f64, 1, 9>::zeros();
    for d in 0..3 {
        let mut e = Vector3::zeros();
        e[d] = 1.0;
        // dn for moving v1, v2 and v0 along axis d.
        let dn1 = e.cross(&e2);
        let dn2 = e1.cross(&e);
        let dn0 = -dn1 - dn2;
        dt[3 + d] = -dn1.dot(&r) / nd;
        dt[6 + d] = -dn2.dot(&r) / nd;
        dt[d] = -(dn0.dot(&r) - n[d]) / nd;
    }
    ray.direction * dt
}
