//! Pinhole cameras with world-to-camera extrinsics.
//!
//! Pixel centers sit at integer coordinates + 0.5 with the origin at the
//! top-left corner; camera space looks down +z with +y pointing down the image.

use std::path::Path;

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::ray::Ray;
use crate::error::{Error, Result};

/// Minimum camera-space depth accepted by [`Camera::project`].
pub const EPS_DEPTH: f64 = 1e-6;

const ORTHO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation: `x_cam = R x_world + t`.
    pub translation: Vector3<f64>,
    pub width: usize,
    pub height: usize,
}

/// JSON layout of a camera record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
    pub width: usize,
    pub height: usize,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = Camera {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at the world origin looking down +z.
    pub fn identity(f: f64, cx: f64, cy: f64, width: usize, height: usize) -> Self {
        Camera {
            fx: f,
            fy: f,
            cx,
            cy,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            width,
            height,
        }
    }

    /// Camera at `eye` whose optical axis passes through `target`.
    ///
    /// `up` is the world direction that should appear upward in the image; it
    /// must not be parallel to the viewing direction.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        f: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("eye coincides with target".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("up is parallel to the view direction".into()))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Camera::new(
            f,
            f,
            width as f64 / 2.0,
            height as f64 / 2.0,
            rotation,
            translation,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).amax();
        if !(ortho <= ORTHO_TOL) {
            return Err(Error::InvalidCamera(format!("rotation not orthonormal ({ortho:e})")));
        }
        if !((r.determinant() - 1.0).abs() <= ORTHO_TOL) {
            return Err(Error::InvalidCamera("rotation determinant is not +1".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("empty image size".into()));
        }
        if !(0.0..=self.width as f64).contains(&self.cx) || !(0.0..=self.height as f64).contains(&self.cy) {
            return Err(Error::InvalidCamera("principal point outside the image".into()));
        }
        if !self.translation.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidCamera("non-finite translation".into()));
        }
        Ok(())
    }

    /// World position of the optical center, `-Rᵀt`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Pixel coordinates and camera-space depth of a world point.
    pub fn project(&self, p: &Vector3<f64>) -> Result<(Vector2<f64>, f64)> {
        let q = self.to_camera(p);
        if !(q.z > EPS_DEPTH) {
            return Err(Error::PointBehindCamera { depth: q.z });
        }
        Ok((self.project_camera_space(&q), q.z))
    }

    pub(crate) fn project_camera_space(&self, q: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * q.x / q.z + self.cx, self.fy * q.y / q.z + self.cy)
    }

    /// Jacobian of [`Camera::project`]'s pixel output with respect to the world point.
    pub fn project_jacobian(&self, p: &Vector3<f64>) -> Result<Matrix2x3<f64>> {
        let q = self.to_camera(p);
        if !(q.z > EPS_DEPTH) {
            return Err(Error::PointBehindCamera { depth: q.z });
        }
        let iz = 1.0 / q.z;
        let dq = Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * q.x * iz * iz,
            0.0,
            self.fy * iz,
            -self.fy * q.y * iz * iz,
        );
        Ok(dq * self.rotation)
    }

    /// Back-projects a pixel to the world ray through the optical center.
    pub fn unproject(&self, pixel: &Vector2<f64>) -> Ray {
        let d_cam = Vector3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0);
        Ray::new(self.center(), self.rotation.transpose() * d_cam)
    }

    pub fn in_bounds(&self, x: &Vector2<f64>) -> bool {
        x.x >= 0.0 && x.y >= 0.0 && x.x <= self.width as f64 && x.y <= self.height as f64
    }

    /// True when intrinsics and image size agree within `tol`.
    pub fn same_intrinsics(&self, other: &Camera, tol: f64) -> bool {
        self.width == other.width
            && self.height == other.height
            && (self.fx - other.fx).abs() <= tol
            && (self.fy - other.fy).abs() <= tol
            && (self.cx - other.cx).abs() <= tol
            && (self.cy - other.cy).abs() <= tol
    }

    /// Copy of this camera with a different image size and intrinsics scaled to match.
    pub fn resized(&self, width: usize, height: usize) -> Camera {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Camera {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            ..self.clone()
        }
    }

    pub fn to_record(&self) -> CameraRecord {
        let r = &self.rotation;
        CameraRecord {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            r: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            t: [self.translation.x, self.translation.y, self.translation.z],
            width: self.width,
            height: self.height,
        }
    }

    pub fn from_record(rec: &CameraRecord) -> Result<Self> {
        Camera::new(
            rec.fx,
            rec.fy,
            rec.cx,
            rec.cy,
            Matrix3::from_row_slice(&rec.r),
            Vector3::from_column_slice(&rec.t),
            rec.width,
            rec.height,
        )
    }
}

pub fn save_cameras(path: impl AsRef<Path>, cameras: &[Camera]) -> Result<()> {
    let recs: Vec<CameraRecord> = cameras.iter().map(Camera::to_record).collect();
    std::fs::write(path, serde_json::to_string_pretty(&recs)?)?;
    Ok(())
}

pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<Camera>> {
    let text = std::fs::read_to_string(path)?;
    let recs: Vec<CameraRecord> = serde_json::from_str(&text)?;
    recs.iter().map(Camera::from_record).collect()
}
