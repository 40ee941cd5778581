//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{Vector2, Vector3};
use photomesh::geometry::{ray_triangle_intersect, Camera, TriangleMesh, EPS_DEPTH};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-pixel nearest hit by brute-force ray casting: `(face, depth)`.
/// Faces with a corner at or behind the near plane are ignored, and ties go
/// to the lower face index.
pub fn raycast_maps(mesh: &TriangleMesh, cam: &Camera) -> Vec<Option<(usize, f64)>> {
    let usable: Vec<bool> = mesh
        .faces
        .iter()
        .map(|f| f.iter().all(|&i| cam.to_camera(&mesh.vertices[i]).z > EPS_DEPTH))
        .collect();
    let mut out = Vec::with_capacity(cam.width * cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let ray = cam.unproject(&Vector2::new(x as f64 + 0.5, y as f64 + 0.5));
            let mut best: Option<(usize, f64)> = None;
            for (j, _) in mesh.faces.iter().enumerate().filter(|(j, _)| usable[*j]) {
                if let Some((t, _)) = ray_triangle_intersect(&ray, &mesh.triangle(j).unwrap()) {
                    let depth = cam.to_camera(&ray.at(t)).z;
                    if best.is_none_or(|(_, d)| depth < d) {
                        best = Some((j, depth));
                    }
                }
            }
            out.push(best);
        }
    }
    out
}

/// Pixels whose oracle face differs from a 4-neighbour's.
pub fn edge_pixels(oracle: &[Option<(usize, f64)>], w: usize, h: usize) -> Vec<bool> {
    let face = |x: usize, y: usize| oracle[y * w + x].map(|(f, _)| f);
    let mut edge = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let f = face(x, y);
            let nbrs = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
            edge[y * w + x] = nbrs.iter().any(|&(i, j)| i < w && j < h && face(i, j) != f);
        }
    }
    edge
}

/// Random triangle soup of `faces` triangles in front of an identity camera.
pub fn random_soup(rng: &mut impl Rng, faces: usize) -> TriangleMesh {
    let mut vertices = Vec::new();
    for _ in 0..faces {
        let c = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(2.0..6.0),
        );
        for _ in 0..3 {
            vertices.push(
                c + Vector3::new(
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.8..0.8),
                ),
            );
        }
    }
    let f = (0..faces).map(|j| [3 * j, 3 * j + 1, 3 * j + 2]).collect();
    TriangleMesh::new(vertices, f).unwrap()
}

/// Fraction of non-edge pixels on which rasterizer and oracle agree in face
/// and depth (relative 1e-9).
pub fn raster_agreement(mesh: &TriangleMesh, cam: &Camera) -> (usize, usize) {
    let maps = photomesh::raster::rasterize(mesh, cam);
    let oracle = raycast_maps(mesh, cam);
    let edge = edge_pixels(&oracle, cam.width, cam.height);
    let (mut total, mut agree) = (0, 0);
    for i in 0..oracle.len() {
        if edge[i] {
            continue;
        }
        total += 1;
        let ok = match (oracle[i], maps.face[i]) {
            (None, None) => true,
            (Some((f, d)), Some(g)) => f == g && (d - maps.depth[i]).abs() <= 1e-9 * d,
            _ => false,
        };
        agree += ok as usize;
    }
    (agree, total)
}

/// O(n·m) nearest-neighbour mean distance.
pub fn brute_point_set_error(s1: &[Vector3<f64>], s2: &[Vector3<f64>]) -> f64 {
    let mut sum = 0.0;
    for p in s1 {
        let mut best = f64::INFINITY;
        for q in s2 {
            let d = p - q;
            best = best.min(d.x * d.x + d.y * d.y + d.z * d.z);
        }
        sum += best.sqrt();
    }
    sum / s1.len() as f64
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| {
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A quick scene: 12 views on a 30° ring at 64×64, 6-dim prior on a level-2
/// icosphere family, checker texture.
pub fn small_spec(seed: u64) -> photomesh::scene::SceneSpec {
    use photomesh::scene::*;
    SceneSpec {
        rig: OrbitRig::with_fov(12, vec![30.0], 3.0, 64, 64, 60.0),
        shape: ShapeSpec {
            family_size: 16,
            code_dim: 6,
            subdivisions: 2,
            family_seed: 0,
            member_seed: 100 + seed,
        },
        texture: TextureSpec::default(),
        panorama: PanoramaSource::Procedural { width: 256, seed },
        noise: NoiseSpec {
            sigma: 0.12,
            code_sigma: 0.0,
            seed,
        },
    }
}

/// The perturbation benchmark: 24 views on a 30° ring at 128×128, default
/// 16-dim prior, checker texture, transform noise `sigma`.
pub fn benchmark_spec(sigma: f64, seed: u64) -> photomesh::scene::SceneSpec {
    use photomesh::scene::*;
    let base = SceneSpec::default();
    SceneSpec {
        rig: OrbitRig::with_fov(24, vec![30.0], 3.0, 128, 128, 60.0),
        shape: ShapeSpec {
            member_seed: base.shape.member_seed + seed,
            ..base.shape
        },
        texture: TextureSpec { seed, ..base.texture },
        panorama: PanoramaSource::Procedural { width: 1024, seed },
        noise: NoiseSpec {
            sigma,
            code_sigma: 0.0,
            seed,
        },
    }
}
