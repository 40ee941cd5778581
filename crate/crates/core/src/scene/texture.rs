use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// Single flat color.
    Constant,
    /// 3D checkerboard of side `cell` modulated by the smooth field.
    Checker,
    /// Low-frequency sinusoidal color field only.
    Smooth,
}

/// Procedural vertex coloring in the shape's canonical frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureSpec {
    pub pattern: Pattern,
    pub cell: f64,
    pub color: [f64; 3],
    /// Per-vertex Gaussian color noise (standard deviation).
    pub noise: f64,
    pub seed: u64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        TextureSpec {
            pattern: Pattern::Checker,
            cell: 0.35,
            color: [0.8, 0.3, 0.2],
            noise: 0.0,
            seed: 0,
        }
    }
}

impl TextureSpec {
    pub fn constant(color: [f64; 3]) -> Self {
        TextureSpec {
            pattern: Pattern::Constant,
            color,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell > 0.0) || !(self.noise >= 0.0) || self.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidConfig("invalid texture spec".into()));
        }
        Ok(())
    }

    pub fn vertex_colors(&self, positions: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let waves: Vec<(Vector3<f64>, f64)> = (0..3)
            .map(|_| {
                let dir = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                (
                    dir.normalize() * rng.random_range(1.5..3.0),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let smooth = |p: &Vector3<f64>| Vector3::from_fn(|c, _| 0.5 + 0.35 * (waves[c].0.dot(p) + waves[c].1).sin());
        let mut colors: Vec<Vector3<f64>> = positions
            .iter()
            .map(|p| match self.pattern {
                Pattern::Constant => Vector3::from(self.color),
                Pattern::Smooth => smooth(p),
                Pattern::Checker => {
                    let parity = p
                        .iter()
                        .map(|x| (x / self.cell).floor() as i64)
                        .sum::<i64>()
                        .rem_euclid(2);
                    let base = if parity == 0 { 0.7 } else { 0.08 };
                    smooth(p) * 0.25 + Vector3::repeat(base)
                }
            })
            .collect();
        if self.noise > 0.0 {
            let normal = Normal::new(0.0, self.noise).expect("noise is finite and positive");
            for c in &mut colors {
                for x in c.iter_mut() {
                    *x += normal.sample(&mut rng);
                }
            }
        }
        Ok(colors.into_iter().map(|c| c.map(|x| x.clamp(0.0, 1.0))).collect())
    }
}
