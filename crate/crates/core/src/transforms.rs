//! Rotations via the so(3) exponential map, the 7-parameter similarity
//! transform `v ↦ exp(s)·R(ω)·v + t`, and virtual-camera bisection.

use nalgebra::{Matrix3, SMatrix, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Camera;

/// Taylor order used by default for the exponential map.
pub const DEFAULT_TAYLOR_ORDER: usize = 20;

/// Rotation angles above this are halved repeatedly before the series is
/// summed, then the result is squared back up.
const SERIES_RADIUS: f64 = 1.0;

pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// The so(3) generators `(e_k)×`.
pub fn generators() -> [Matrix3<f64>; 3] {
    [hat(&Vector3::x()), hat(&Vector3::y()), hat(&Vector3::z())]
}

fn squarings(w: &Vector3<f64>) -> u32 {
    let theta = w.norm();
    if theta <= SERIES_RADIUS {
        0
    } else {
        (theta / SERIES_RADIUS).log2().ceil() as u32
    }
}

/// `Σ_{k=0..order} Aᵏ/k!`
fn taylor(a: &Matrix3<f64>, order: usize) -> Matrix3<f64> {
    let mut term = Matrix3::identity();
    let mut sum = Matrix3::identity();
    for k in 1..=order {
        term = term * a / k as f64;
        sum += term;
    }
    sum
}

/// Term-by-term derivative of the truncated series along direction `da`:
/// `d(Aᵏ) = d(Aᵏ⁻¹)·A + Aᵏ⁻¹·dA`.
fn taylor_derivative(a: &Matrix3<f64>, da: &Matrix3<f64>, order: usize) -> Matrix3<f64> {
    let mut power = Matrix3::identity();
    let mut dpower = Matrix3::zeros();
    let mut fact = 1.0;
    let mut sum = Matrix3::zeros();
    for k in 1..=order {
        dpower = dpower * a + power * da;
        power *= a;
        fact *= k as f64;
        sum += dpower / fact;
    }
    sum
}

/// Rotation matrix `exp(ω×)` from the truncated Taylor series of the given order.
///
/// The series is summed on `ω / 2^m` with `m` chosen so the scaled angle is at
/// most one radian, and the result is squared `m` times. For angles up to one
/// radian this is exactly the plain truncated series.
pub fn so3_exp(w: &Vector3<f64>, order: usize) -> Matrix3<f64> {
    let m = squarings(w);
    let a = hat(w) / f64::powi(2.0, m as i32);
    let mut r = taylor(&a, order.max(1));
    for _ in 0..m {
        r = r * r;
    }
    r
}

/// Partial derivatives `∂R/∂ω_k` of [`so3_exp`], differentiated through the
/// same series and squarings.
pub fn so3_exp_jacobian(w: &Vector3<f64>, order: usize) -> [Matrix3<f64>; 3] {
    let order = order.max(1);
    let m = squarings(w);
    let scale = f64::powi(2.0, m as i32);
    let a = hat(w) / scale;
    let base = taylor(&a, order);
    generators().map(|g| {
        let mut r = base;
        let mut dr = taylor_derivative(&a, &(g / scale), order);
        for _ in 0..m {
            dr = dr * r + r * dr;
            r = r * r;
        }
        dr
    })
}

/// Closed-form Rodrigues rotation, kept as an independent reference.
pub fn rodrigues(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let k = hat(w);
    if theta < 1e-8 {
        return Matrix3::identity() + k + k * k * 0.5;
    }
    Matrix3::identity() + k * (theta.sin() / theta) + k * k * ((1.0 - theta.cos()) / (theta * theta))
}

/// Similarity parameters `θ = [s; ω; t]`: log-scale, so(3) rotation, translation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimilarityParams {
    pub s: f64,
    pub omega: Vector3<f64>,
    pub t: Vector3<f64>,
}

impl SimilarityParams {
    pub const DIM: usize = 7;

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.s,
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.t.x,
            self.t.y,
            self.t.z,
        ]
    }

    pub fn from_slice(p: &[f64]) -> Result<Self> {
        if p.len() != 7 {
            return Err(Error::DimensionMismatch {
                expected: 7,
                actual: p.len(),
            });
        }
        Ok(SimilarityParams {
            s: p[0],
            omega: Vector3::new(p[1], p[2], p[3]),
            t: Vector3::new(p[4], p[5], p[6]),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    pub fn scale(&self) -> f64 {
        self.s.exp()
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        so3_exp(&self.omega, DEFAULT_TAYLOR_ORDER)
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.scale() * (self.rotation() * v) + self.t
    }
}

/// Maps every vertex through `exp(s)·R(ω)·v + t`.
pub fn apply_similarity(vertices: &[Vector3<f64>], theta: &SimilarityParams) -> Vec<Vector3<f64>> {
    let sr = theta.rotation() * theta.scale();
    vertices.iter().map(|v| sr * v + theta.t).collect()
}

/// `∂v/∂θ` for one canonical vertex; columns are `[s, ω₁, ω₂, ω₃, t₁, t₂, t₃]`.
pub fn similarity_jacobian(v: &Vector3<f64>, theta: &SimilarityParams) -> SMatrix<f64, 3, 7> {
    let scale = theta.scale();
    let r = theta.rotation();
    let dr = so3_exp_jacobian(&theta.omega, DEFAULT_TAYLOR_ORDER);
    let mut j = SMatrix::<f64, 3, 7>::zeros();
    j.set_column(0, &(scale * (r * v)));
    for k in 0..3 {
        j.set_column(1 + k, &(scale * (dr[k] * v)));
        j[(k, 4 + k)] = 1.0;
    }
    j
}

/// Spherical interpolation between unit quaternions, taking the short arc and
/// falling back to normalized lerp for nearly identical inputs.
pub fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, t: f64) -> UnitQuaternion<f64> {
    let qa = a.quaternion();
    let mut qb = *b.quaternion();
    let mut dot = qa.dot(&qb);
    if dot < 0.0 {
        qb = -qb;
        dot = -dot;
    }
    if dot > 1.0 - 1e-9 {
        return UnitQuaternion::from_quaternion(qa * (1.0 - t) + qb * t);
    }
    let angle = dot.min(1.0).acos();
    let sin = angle.sin();
    let wa = ((1.0 - t) * angle).sin() / sin;
    let wb = (t * angle).sin() / sin;
    UnitQuaternion::from_quaternion(qa * wa + qb * wb)
}

/// The bisecting camera between `a` and `b`: slerped rotation, averaged
/// optical centers, intrinsics copied from `a`.
pub fn virtual_camera(a: &Camera, b: &Camera) -> Result<Camera> {
    if !a.same_intrinsics(b, 1e-9) {
        return Err(Error::IntrinsicsMismatch);
    }
    let qa = UnitQuaternion::from_matrix(&a.rotation);
    let qb = UnitQuaternion::from_matrix(&b.rotation);
    let rotation = slerp(&qa, &qb, 0.5).to_rotation_matrix().into_inner();
    let center = (a.center() + b.center()) * 0.5;
    Ok(Camera {
        rotation,
        translation: -(rotation * center),
        ..a.clone()
    })
}
