//! Equirectangular backgrounds and their perspective crops.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::image::Image;

/// Equirectangular image: longitude spans the width, latitude the height,
/// +y is up and longitude 0 looks along +z.
#[derive(Debug, Clone, PartialEq)]
pub struct Panorama {
    image: Image,
}

impl Panorama {
    pub fn new(image: Image) -> Result<Self> {
        if image.width() != 2 * image.height() || image.height() == 0 {
            return Err(Error::InvalidConfig(format!(
                "panorama must be 2:1, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        Ok(Panorama { image })
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        Panorama::new(Image::load_png(path)?)
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    /// Multi-octave value noise evaluated on the sphere over a sky/ground
    /// gradient. Seamless across the longitude wrap.
    pub fn procedural(width: usize, seed: u64) -> Result<Self> {
        let height = width / 2;
        let mut data = vec![0.0; width * height * 3];
        data.par_chunks_mut(width * 3).enumerate().for_each(|(y, row)| {
            for x in 0..width {
                let d = pixel_direction(x as f64 + 0.5, y as f64 + 0.5, width, height);
                let c = procedural_color(&d, seed);
                row[3 * x..3 * x + 3].copy_from_slice(c.as_slice());
            }
        });
        Panorama::new(Image::from_raw(width, height, data)?)
    }

    /// Bilinear lookup in direction `d` (need not be unit), wrapping in
    /// longitude and clamping in latitude.
    pub fn sample(&self, d: &Vector3<f64>) -> Vector3<f64> {
        let (w, h) = (self.image.width(), self.image.height());
        let q = direction_pixel(d, w, h);
        let u = q.x - 0.5;
        let v = (q.y - 0.5).clamp(0.0, (h - 1) as f64);
        let i0f = u.floor();
        let a = u - i0f;
        let i0 = (i0f as i64).rem_euclid(w as i64) as usize;
        let i1 = (i0 + 1) % w;
        let j0 = (v.floor() as usize).min(h - 1);
        let j1 = (j0 + 1).min(h - 1);
        let b = v - j0 as f64;
        let im = &self.image;
        im.get(i0, j0) * ((1.0 - a) * (1.0 - b))
            + im.get(i1, j0) * (a * (1.0 - b))
            + im.get(i0, j1) * ((1.0 - a) * b)
            + im.get(i1, j1) * (a * b)
    }
}

/// Continuous panorama coordinates of direction `d`.
pub fn direction_pixel(d: &Vector3<f64>, width: usize, height: usize) -> Vector2<f64> {
    let d = d.normalize();
    let lon = d.x.atan2(d.z);
    let lat = d.y.clamp(-1.0, 1.0).asin();
    Vector2::new((lon / TAU + 0.5) * width as f64, (0.5 - lat / PI) * height as f64)
}

/// Unit direction at continuous panorama coordinates `(u, v)`.
pub fn pixel_direction(u: f64, v: f64, width: usize, height: usize) -> Vector3<f64> {
    let lon = (u / width as f64 - 0.5) * TAU;
    let lat = (0.5 - v / height as f64) * PI;
    Vector3::new(lat.cos() * lon.sin(), lat.sin(), lat.cos() * lon.cos())
}

/// Background seen by `camera`'s rotation through a pinhole of horizontal
/// field of view `fov_deg`, at the camera's image size.
pub fn crop_panorama(pano: &Panorama, camera: &Camera, fov_deg: f64) -> Result<Image> {
    if !(fov_deg > 0.0 && fov_deg < 180.0) {
        return Err(Error::InvalidConfig(format!(
            "crop fov must be in (0, 180), got {fov_deg}"
        )));
    }
    let (w, h) = (camera.width, camera.height);
    let f = w as f64 / 2.0 / (fov_deg.to_radians() / 2.0).tan();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let rt = camera.rotation.transpose();
    let mut data = vec![0.0; w * h * 3];
    data.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let dc = Vector3::new((x as f64 + 0.5 - cx) / f, (y as f64 + 0.5 - cy) / f, 1.0);
            let c = pano.sample(&(rt * dc));
            row[3 * x..3 * x + 3].copy_from_slice(c.as_slice());
        }
    });
    Image::from_raw(w, h, data)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(i: i64, j: i64, k: i64, seed: u64) -> f64 {
    let h = splitmix(seed ^ splitmix((i as u64) ^ splitmix((j as u64) ^ splitmix(k as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Trilinear value noise in [0, 1] with smoothstep fade.
pub(crate) fn value_noise(p: &Vector3<f64>, seed: u64) -> f64 {
    let fl = p.map(f64::floor);
    let f = p - fl;
    let s = f.map(|t| t * t * (3.0 - 2.0 * t));
    let (i, j, k) = (fl.x as i64, fl.y as i64, fl.z as i64);
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let w = (if dx == 1 { s.x } else { 1.0 - s.x })
                    * (if dy == 1 { s.y } else { 1.0 - s.y })
                    * (if dz == 1 { s.z } else { 1.0 - s.z });
                acc += w * lattice(i + dx, j + dy, k + dz, seed);
            }
        }
    }
    acc
}

pub(crate) fn fractal_noise(p: &Vector3<f64>, octaves: usize, seed: u64) -> f64 {
    let (mut amp, mut freq, mut sum, mut norm) = (1.0, 1.0, 0.0, 0.0);
    for o in 0..octaves {
        sum += amp * value_noise(&(p * freq), seed.wrapping_add(o as u64 * 7919));
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    sum / norm
}

fn procedural_color(d: &Vector3<f64>, seed: u64) -> Vector3<f64> {
    let sky = Vector3::new(0.55, 0.7, 0.9);
    let ground = Vector3::new(0.45, 0.37, 0.28);
    let t = ((d.y + 0.15) / 0.3).clamp(0.0, 1.0);
    let base = ground.lerp(&sky, t * t * (3.0 - 2.0 * t));
    let p = d * 4.0;
    let n = Vector3::new(
        fractal_noise(&p, 5, seed),
        fractal_noise(&p, 5, seed ^ 0xA5A5),
        fractal_noise(&p, 5, seed ^ 0x5A5A_0000),
    );
    (base * 0.5 + n * 0.6 - Vector3::repeat(0.05)).map(|c| c.clamp(0.0, 1.0))
}
