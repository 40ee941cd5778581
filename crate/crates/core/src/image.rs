//! Three-channel float images with differentiable bilinear sampling.
//!
//! Continuous coordinates use the pixel-center convention: the center of
//! pixel `(i, j)` is at `(i + 0.5, j + 0.5)`. Sampling clamps to the border
//! centers, and the gradient vanishes wherever the clamp is active.

use std::path::Path;

use nalgebra::{Matrix2x3, Vector2, Vector3};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// Neighbouring pixel indices and interpolation weights along one axis.
#[derive(Debug, Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    frac: f64,
    /// Whether the coordinate lies strictly within the interpolation range.
    live: bool,
}

fn tap(x: f64, n: usize) -> Tap {
    let u = x - 0.5;
    let max = (n - 1) as f64;
    if !(u >= 0.0) {
        return Tap {
            i0: 0,
            i1: 0,
            frac: 0.0,
            live: false,
        };
    }
    if u >= max {
        return Tap {
            i0: n - 1,
            i1: n - 1,
            frac: 0.0,
            live: false,
        };
    }
    let i0 = u.floor() as usize;
    Tap {
        i0,
        i1: i0 + 1,
        frac: u - i0 as f64,
        live: true,
    }
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![0.0; width * height * CHANNELS],
        }
    }

    pub fn filled(width: usize, height: usize, color: Vector3<f64>) -> Self {
        Image::from_fn(width, height, |_, _| color)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Vector3<f64>) -> Self {
        let mut img = Image::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    /// Wraps row-major interleaved RGB data.
    pub fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * CHANNELS {
            return Err(Error::DimensionMismatch {
                expected: width * height * CHANNELS,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("image contains non-finite values".into()));
        }
        Ok(Image { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Vector3<f64> {
        let o = (y * self.width + x) * CHANNELS;
        Vector3::new(self.data[o], self.data[o + 1], self.data[o + 2])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: Vector3<f64>) {
        let o = (y * self.width + x) * CHANNELS;
        self.data[o..o + 3].copy_from_slice(c.as_slice());
    }

    /// Bilinear interpolation of the four surrounding pixel centers.
    pub fn sample_bilinear(&self, x: &Vector2<f64>) -> Vector3<f64> {
        let tx = tap(x.x, self.width);
        let ty = tap(x.y, self.height);
        let c00 = self.get(tx.i0, ty.i0);
        let c10 = self.get(tx.i1, ty.i0);
        let c01 = self.get(tx.i0, ty.i1);
        let c11 = self.get(tx.i1, ty.i1);
        let top = c00 * (1.0 - tx.frac) + c10 * tx.frac;
        let bottom = c01 * (1.0 - tx.frac) + c11 * tx.frac;
        top * (1.0 - ty.frac) + bottom * ty.frac
    }

    /// `∂I/∂x` of [`Image::sample_bilinear`]: row 0 is the derivative along
    /// `x`, row 1 along `y`, one column per channel.
    pub fn sample_gradient(&self, x: &Vector2<f64>) -> Matrix2x3<f64> {
        let tx = tap(x.x, self.width);
        let ty = tap(x.y, self.height);
        let c00 = self.get(tx.i0, ty.i0);
        let c10 = self.get(tx.i1, ty.i0);
        let c01 = self.get(tx.i0, ty.i1);
        let c11 = self.get(tx.i1, ty.i1);
        let mut g = Matrix2x3::zeros();
        if tx.live {
            let d = (c10 - c00) * (1.0 - ty.frac) + (c11 - c01) * ty.frac;
            g.set_row(0, &d.transpose());
        }
        if ty.live {
            let d = (c01 - c00) * (1.0 - tx.frac) + (c11 - c10) * tx.frac;
            g.set_row(1, &d.transpose());
        }
        g
    }

    /// Quantizes to 8 bits per channel and back, as a PNG round trip would.
    pub fn quantized(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| to_u8(v) as f64 / 255.0).collect(),
        }
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        image::RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let c = self.get(x as usize, y as usize);
            image::Rgb([to_u8(c.x), to_u8(c.y), to_u8(c.z)])
        })
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Image {
        let (w, h) = img.dimensions();
        Image {
            width: w as usize,
            height: h as usize,
            data: img.as_raw().iter().map(|&b| b as f64 / 255.0).collect(),
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8().save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
        let img = image::open(path)?.to_rgb8();
        Ok(Image::from_rgb8(&img))
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
