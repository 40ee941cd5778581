use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Camera;

/// Cameras on a sphere around the origin, all looking at it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitRig {
    pub azimuths: usize,
    /// Degrees above the horizontal plane.
    pub elevations: Vec<f64>,
    pub radius: f64,
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels.
    pub focal: f64,
}

impl Default for OrbitRig {
    fn default() -> Self {
        OrbitRig::with_fov(24, vec![-10.0, 0.0, 20.0], 3.0, 224, 224, 60.0)
    }
}

impl OrbitRig {
    /// Rig whose focal length gives horizontal field of view `fov_deg`.
    pub fn with_fov(
        azimuths: usize,
        elevations: Vec<f64>,
        radius: f64,
        width: usize,
        height: usize,
        fov_deg: f64,
    ) -> Self {
        OrbitRig {
            azimuths,
            elevations,
            radius,
            width,
            height,
            focal: focal_for_fov(width, fov_deg),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.azimuths < 2 {
            return bad("rig needs at least two azimuths");
        }
        if self.elevations.is_empty() || self.elevations.iter().any(|e| !(e.abs() < 90.0)) {
            return bad("elevations must be non-empty and strictly between -90 and 90 degrees");
        }
        if !(self.radius > 1.0) {
            return bad("rig radius must exceed 1");
        }
        if self.width == 0 || self.height == 0 || !(self.focal > 0.0) {
            return bad("rig image size and focal length must be positive");
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        self.azimuths * self.elevations.len()
    }

    pub fn fov_deg(&self) -> f64 {
        2.0 * (self.width as f64 / (2.0 * self.focal)).atan().to_degrees()
    }
}

pub fn focal_for_fov(width: usize, fov_deg: f64) -> f64 {
    width as f64 / 2.0 / (fov_deg.to_radians() / 2.0).tan()
}

/// Elevation-major, azimuth-minor camera list. Azimuth 0 sits on +z.
pub fn make_orbit_cameras(rig: &OrbitRig) -> Result<Vec<Camera>> {
    rig.validate()?;
    let mut cams = Vec::with_capacity(rig.frame_count());
    for el in &rig.elevations {
        let el = el.to_radians();
        for k in 0..rig.azimuths {
            let az = std::f64::consts::TAU * k as f64 / rig.azimuths as f64;
            let eye = rig.radius * Vector3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos());
            cams.push(Camera::look_at(
                eye,
                Vector3::zeros(),
                Vector3::y(),
                rig.focal,
                rig.width,
                rig.height,
            )?);
        }
    }
    Ok(cams)
}
