//! Shape and alignment metrics: directional point-set error (η), pixel
//! reprojection error at a frame distance, and rasterized depth error.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ray_triangle_intersect, Camera, TriangleMesh, EPS_AREA};
use crate::raster::{rasterize, sample_visibility_with_maps, RasterMaps, DEFAULT_VISIBILITY_TOLERANCE};
use crate::transforms::virtual_camera;

pub const DEFAULT_SAMPLE_COUNT: usize = 10_000;

#[inline]
fn dist2(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let d = a - b;
    d.x * d.x + d.y * d.y + d.z * d.z
}

const LEAF: usize = 8;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// Static 3D k-d tree for exact nearest-neighbor queries.
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    root: Node,
}

impl KdTree {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        let mut points = points.to_vec();
        let n = points.len();
        let root = Self::build(&mut points, 0, n);
        KdTree { points, root }
    }

    fn build(points: &mut [Vector3<f64>], start: usize, end: usize) -> Node {
        if end - start <= LEAF {
            return Node::Leaf { start, end };
        }
        let slice = &mut points[start..end];
        let (mut lo, mut hi) = (slice[0], slice[0]);
        for p in slice.iter() {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let axis = (hi - lo).imax();
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |a, b| a[axis].total_cmp(&b[axis]));
        let value = slice[mid][axis];
        let left = Box::new(Self::build(points, start, start + mid));
        let right = Box::new(Self::build(points, start + mid, end));
        Node::Split {
            axis,
            value,
            left,
            right,
        }
    }

    /// Squared distance from `q` to its nearest point; `∞` for an empty tree.
    pub fn nearest_dist2(&self, q: &Vector3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        self.search(&self.root, q, &mut best);
        best
    }

    fn search(&self, node: &Node, q: &Vector3<f64>, best: &mut f64) {
        match node {
            Node::Leaf { start, end } => {
                for p in &self.points[*start..*end] {
                    let d = dist2(p, q);
                    if d < *best {
                        *best = d;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= *best {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Mean over `s1` of the distance to the nearest point of `s2`.
pub fn point_set_error(s1: &[Vector3<f64>], s2: &[Vector3<f64>]) -> Result<f64> {
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::EmptySet);
    }
    let tree = KdTree::new(s2);
    let d: Vec<f64> = s1.par_iter().map(|p| tree.nearest_dist2(p).sqrt()).collect();
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Area-weighted uniform surface samples, deterministic in `seed`.
pub fn sample_mesh_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<Vector3<f64>>> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample count must be positive".into()));
    }
    let areas: Vec<f64> = (0..mesh.faces.len()).map(|j| mesh.face_area(j)).collect();
    if areas.iter().sum::<f64>() < EPS_AREA {
        return Err(Error::DegenerateMesh);
    }
    let pick = WeightedIndex::new(&areas).map_err(|_| Error::DegenerateMesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let [a, b, c] = mesh.faces[pick.sample(&mut rng)];
            let r1: f64 = rng.random::<f64>().sqrt();
            let r2: f64 = rng.random();
            mesh.vertices[a] * (1.0 - r1) + mesh.vertices[b] * (r1 * (1.0 - r2)) + mesh.vertices[c] * (r1 * r2)
        })
        .collect())
}

/// Intersection of the ray through pixel position `x` with `mesh`, using the
/// raster map of the same camera to pick candidate faces.
fn raycast_with_maps(
    mesh: &TriangleMesh,
    camera: &Camera,
    maps: &RasterMaps,
    x: &Vector2<f64>,
) -> Option<Vector3<f64>> {
    let ray = camera.unproject(x);
    let (px, py) = (x.x.floor() as i64, x.y.floor() as i64);
    let face_at = |i: i64, j: i64| {
        (i >= 0 && j >= 0 && (i as usize) < maps.width && (j as usize) < maps.height)
            .then(|| maps.face[maps.index(i as usize, j as usize)])
            .flatten()
    };
    let hit = |f: usize| {
        mesh.triangle(f)
            .ok()
            .and_then(|tri| ray_triangle_intersect(&ray, &tri))
            .map(|(t, _)| t)
    };
    if let Some(t) = face_at(px, py).and_then(hit) {
        return Some(ray.at(t));
    }
    let mut best: Option<f64> = None;
    for dj in -1..=1 {
        for di in -1..=1 {
            if let Some(t) = face_at(px + di, py + dj).and_then(hit) {
                best = Some(best.map_or(t, |b| b.min(t)));
            }
        }
    }
    best.map(|t| ray.at(t))
}

/// Mean displacement in `to` between points of `a` sampled from the pair's
/// bisecting view and the points of `b` hit by the same rays from `from`.
fn transfer_errors(
    a: &TriangleMesh,
    b: &TriangleMesh,
    from: (&Camera, &RasterMaps),
    to: (&Camera, &RasterMaps),
    b_from: &RasterMaps,
) -> Result<Vec<f64>> {
    let sampler = virtual_camera(from.0, to.0)?;
    let sampler_maps = rasterize(a, &sampler);
    let samples = sample_visibility_with_maps(a, &sampler_maps, &[from, to], DEFAULT_VISIBILITY_TOLERANCE);
    let mut out = Vec::new();
    for s in samples.iter().filter(|s| s.visible_in_all()) {
        let (x_from, _) = from.0.project(&s.point)?;
        let Some(q) = raycast_with_maps(b, from.0, b_from, &x_from) else {
            continue;
        };
        let (Ok((xa, _)), Ok((xb, _))) = (to.0.project(&s.point), to.0.project(&q)) else {
            continue;
        };
        out.push((xa - xb).norm());
    }
    Ok(out)
}

/// Average pixel displacement induced by replacing `a` with `b` when
/// transferring points between frames `f` and `f + d`, symmetrized over the
/// two directions and averaged over all frame pairs with correspondences.
pub fn reprojection_error(a: &TriangleMesh, b: &TriangleMesh, cameras: &[Camera], d: usize) -> Result<f64> {
    if d == 0 || cameras.len() < d + 1 {
        return Err(Error::InvalidConfig(format!(
            "frame distance {d} needs at least {} cameras, got {}",
            d + 1,
            cameras.len()
        )));
    }
    let maps_a: Vec<RasterMaps> = cameras.par_iter().map(|c| rasterize(a, c)).collect();
    let maps_b: Vec<RasterMaps> = cameras.par_iter().map(|c| rasterize(b, c)).collect();
    let per_pair = (0..cameras.len() - d)
        .into_par_iter()
        .map(|f| {
            let g = f + d;
            let mut e = transfer_errors(a, b, (&cameras[f], &maps_a[f]), (&cameras[g], &maps_a[g]), &maps_b[f])?;
            e.extend(transfer_errors(
                a,
                b,
                (&cameras[g], &maps_a[g]),
                (&cameras[f], &maps_a[f]),
                &maps_b[g],
            )?);
            Ok((!e.is_empty()).then(|| e.iter().sum::<f64>() / e.len() as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<f64> = per_pair.into_iter().flatten().collect();
    if means.is_empty() {
        return Err(Error::NoVisibleSamples);
    }
    Ok(means.iter().sum::<f64>() / means.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthError {
    /// Mean absolute depth difference per camera; `None` without overlap.
    pub per_camera: Vec<Option<f64>>,
    /// Mean of the per-camera values that exist.
    pub mean: f64,
}

pub fn depth_error(mesh: &TriangleMesh, gt: &TriangleMesh, cameras: &[Camera]) -> Result<DepthError> {
    let per_camera: Vec<Option<f64>> = cameras
        .par_iter()
        .map(|cam| {
            let m = rasterize(mesh, cam);
            let g = rasterize(gt, cam);
            let (mut sum, mut n) = (0.0, 0usize);
            for (dm, dg) in m.depth.iter().zip(&g.depth) {
                if dm.is_finite() && dg.is_finite() {
                    sum += (dm - dg).abs();
                    n += 1;
                }
            }
            (n > 0).then(|| sum / n as f64)
        })
        .collect();
    let valid: Vec<f64> = per_camera.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(DepthError {
        mean: valid.iter().sum::<f64>() / valid.len() as f64,
        per_camera,
    })
}

/// Metrics report. η values are in world units (unscaled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub eta_pred_to_gt: f64,
    pub eta_gt_to_pred: f64,
    /// Reprojection error keyed by frame distance.
    pub reproj: BTreeMap<usize, f64>,
    pub depth_error: f64,
    pub sample_count: usize,
    pub seed: u64,
}

impl Metrics {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Both η directions from `n` surface samples per mesh (same seed for both,
/// so identical meshes give identical point sets), plus reprojection error
/// at each distance in `distances` (NaN when no sample is visible at that
/// distance) and the depth error.
pub fn evaluate(
    pred: &TriangleMesh,
    gt: &TriangleMesh,
    cameras: &[Camera],
    distances: &[usize],
    n: usize,
    seed: u64,
) -> Result<Metrics> {
    let (eta_pred_to_gt, eta_gt_to_pred) = eta_pair(pred, gt, n, seed)?;
    let reproj = distances
        .iter()
        .map(|&d| match reprojection_error(gt, pred, cameras, d) {
            Ok(e) => Ok((d, e)),
            Err(Error::NoVisibleSamples) => Ok((d, f64::NAN)),
            Err(e) => Err(e),
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(Metrics {
        eta_pred_to_gt,
        eta_gt_to_pred,
        reproj,
        depth_error: depth_error(pred, gt, cameras)?.mean,
        sample_count: n,
        seed,
    })
}

/// `(η(pred→gt), η(gt→pred))`.
pub fn eta_pair(pred: &TriangleMesh, gt: &TriangleMesh, n: usize, seed: u64) -> Result<(f64, f64)> {
    let sp = sample_mesh_surface(pred, n, seed)?;
    let sg = sample_mesh_surface(gt, n, seed)?;
    Ok((point_set_error(&sp, &sg)?, point_set_error(&sg, &sp)?))
}
