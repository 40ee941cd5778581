//! Icosphere-based procedural shape family used to fit the linear prior.

use std::collections::HashMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::TriangleMesh;
use crate::prior::{fit_prior, LinearShapePrior};

/// Unit icosphere after `subdivisions` rounds of 4-to-1 splitting.
/// Level `n` has `10·4ⁿ + 2` vertices and `20·4ⁿ` faces.
pub fn icosphere(subdivisions: usize) -> TriangleMesh {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        [-1.0, p, 0.0],
        [1.0, p, 0.0],
        [-1.0, -p, 0.0],
        [1.0, -p, 0.0],
        [0.0, -1.0, p],
        [0.0, 1.0, p],
        [0.0, -1.0, -p],
        [0.0, 1.0, -p],
        [p, 0.0, -1.0],
        [p, 0.0, 1.0],
        [-p, 0.0, -1.0],
        [-p, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vector3::from(*v).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh {
        vertices,
        faces,
        colors: None,
    }
}

/// Deformation parameters of one family member.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeParams {
    /// Per-axis stretch applied first.
    pub scale: Vector3<f64>,
    /// Cross-section growth along x: `(y, z) *= 1 + taper·x`.
    pub taper: f64,
    /// Radial bumps `amplitude·sin(frequency·(d·axis) + phase)`.
    pub bumps: Vec<Bump>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    pub axis: Vector3<f64>,
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl ShapeParams {
    /// Elongated, car-ish proportions with random variation.
    pub fn random(rng: &mut impl Rng) -> Self {
        let scale = Vector3::new(
            rng.random_range(1.3..1.9),
            rng.random_range(0.55..0.95),
            rng.random_range(0.7..1.1),
        );
        let bumps = (0..3)
            .map(|_| {
                let axis = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
                .try_normalize(1e-6)
                .unwrap_or_else(Vector3::x);
                Bump {
                    axis,
                    amplitude: rng.random_range(0.0..0.12),
                    frequency: rng.random_range(1.0..3.0),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                }
            })
            .collect();
        ShapeParams {
            scale,
            taper: rng.random_range(-0.25..0.25),
            bumps,
        }
    }

    pub fn apply(&self, base: &TriangleMesh) -> TriangleMesh {
        let vertices = base
            .vertices
            .iter()
            .map(|d| {
                let radial = 1.0
                    + self
                        .bumps
                        .iter()
                        .map(|b| b.amplitude * (b.frequency * d.dot(&b.axis) + b.phase).sin())
                        .sum::<f64>();
                let mut v = d.component_mul(&self.scale) * radial;
                let taper = 1.0 + self.taper * v.x;
                v.y *= taper;
                v.z *= taper;
                v
            })
            .collect();
        let mut mesh = TriangleMesh {
            vertices,
            faces: base.faces.clone(),
            colors: None,
        };
        mesh.normalize_to_unit_sphere();
        mesh
    }
}

/// `count` family members on a shared icosphere topology, deterministic in `seed`.
pub fn make_family(count: usize, subdivisions: usize, seed: u64) -> Vec<TriangleMesh> {
    let base = icosphere(subdivisions);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| ShapeParams::random(&mut rng).apply(&base)).collect()
}

/// Fits a `k`-dimensional prior on the first `count` members and returns it
/// with a held-out member (index `count`), which is not in the training set.
pub fn family_prior(
    count: usize,
    k: usize,
    subdivisions: usize,
    seed: u64,
) -> Result<(LinearShapePrior, TriangleMesh)> {
    let mut members = make_family(count + 1, subdivisions, seed);
    let held_out = members.pop().expect("count + 1 > 0");
    let prior = fit_prior(&members, k)?;
    Ok((prior, held_out))
}
