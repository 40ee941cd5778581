//! Z-buffered triangle rasterization into face-index, depth and barycentric
//! maps, and the visibility-tested point sampler built on top of it.

use nalgebra::{Vector2, Vector3};

use crate::geometry::{Camera, TriangleMesh, EPS_DEPTH};
use crate::image::Image;

/// Default depth-agreement tolerance for visibility tests (world units).
pub const DEFAULT_VISIBILITY_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct RasterMaps {
    pub width: usize,
    pub height: usize,
    pub face: Vec<Option<usize>>,
    /// Camera-space depth; `+∞` where nothing was drawn.
    pub depth: Vec<f64>,
    /// Perspective-correct barycentric weights; zero where nothing was drawn.
    pub bary: Vec<Vector3<f64>>,
    /// Faces dropped because a corner was at or behind the near plane.
    pub skipped_faces: usize,
}

impl RasterMaps {
    fn empty(width: usize, height: usize) -> Self {
        RasterMaps {
            width,
            height,
            face: vec![None; width * height],
            depth: vec![f64::INFINITY; width * height],
            bary: vec![Vector3::zeros(); width * height],
            skipped_faces: 0,
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn covered(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.face
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.map(|f| (i % self.width, i / self.width, f)))
    }

    pub fn coverage(&self) -> usize {
        self.face.iter().filter(|f| f.is_some()).count()
    }

    /// Depth at a continuous pixel position, interpolating inverse depth
    /// bilinearly over the covered neighbours only.
    pub fn interpolate_depth(&self, x: &Vector2<f64>) -> Option<f64> {
        let (w, h) = (self.width, self.height);
        let u = (x.x - 0.5).clamp(0.0, (w - 1) as f64);
        let v = (x.y - 0.5).clamp(0.0, (h - 1) as f64);
        let i0 = (u.floor() as usize).min(w - 1);
        let j0 = (v.floor() as usize).min(h - 1);
        let i1 = (i0 + 1).min(w - 1);
        let j1 = (j0 + 1).min(h - 1);
        let a = u - i0 as f64;
        let b = v - j0 as f64;
        let taps = [
            (i0, j0, (1.0 - a) * (1.0 - b)),
            (i1, j0, a * (1.0 - b)),
            (i0, j1, (1.0 - a) * b),
            (i1, j1, a * b),
        ];
        let mut wsum = 0.0;
        let mut acc = 0.0;
        for (i, j, wt) in taps {
            let d = self.depth[self.index(i, j)];
            if d.is_finite() && wt > 0.0 {
                wsum += wt;
                acc += wt / d;
            }
        }
        (wsum > 0.0).then(|| wsum / acc)
    }

    /// Face ids as hashed colors; uncovered pixels are black.
    pub fn face_image(&self) -> Image {
        Image::from_fn(self.width, self.height, |x, y| match self.face[self.index(x, y)] {
            Some(f) => {
                let h = (f as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                Vector3::new(
                    ((h >> 16) & 0xff) as f64 / 255.0,
                    ((h >> 32) & 0xff) as f64 / 255.0,
                    ((h >> 48) & 0xff) as f64 / 255.0,
                )
            }
            None => Vector3::zeros(),
        })
    }

    /// Depth normalized to [0, 1] over the covered range (near = bright).
    pub fn depth_image(&self) -> Image {
        let finite = self.depth.iter().copied().filter(|d| d.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), d| (l.min(d), h.max(d)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        Image::from_fn(self.width, self.height, |x, y| {
            let d = self.depth[self.index(x, y)];
            if d.is_finite() {
                Vector3::repeat(1.0 - 0.8 * (d - lo) / span)
            } else {
                Vector3::zeros()
            }
        })
    }
}

#[inline]
fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Pixels exactly on an edge belong to the triangle only for top/left edges,
/// so a pixel on an edge shared by two triangles is drawn once.
#[inline]
fn owns_edge(a: &Vector2<f64>, b: &Vector2<f64>) -> bool {
    let d = b - a;
    d.y > 0.0 || (d.y == 0.0 && d.x < 0.0)
}

/// Rasterizes `mesh` as seen from `camera`.
///
/// Pixel centers strictly inside a projected triangle (or on its owned edges)
/// are candidates; the nearest candidate wins, with ties going to the lower
/// face index. Faces with any corner at depth `<= EPS_DEPTH` are skipped.
pub fn rasterize(mesh: &TriangleMesh, camera: &Camera) -> RasterMaps {
    let (w, h) = (camera.width, camera.height);
    let mut maps = RasterMaps::empty(w, h);
    let cam_pts: Vec<Vector3<f64>> = mesh.vertices.iter().map(|v| camera.to_camera(v)).collect();

    for (j, f) in mesh.faces.iter().enumerate() {
        let mut q = [cam_pts[f[0]], cam_pts[f[1]], cam_pts[f[2]]];
        if q.iter().any(|p| !(p.z > EPS_DEPTH)) {
            maps.skipped_faces += 1;
            continue;
        }
        let mut s = q.map(|p| camera.project_camera_space(&p));
        // Corner order for the stored barycentrics.
        let mut order = [0usize, 1, 2];
        let mut area = edge(&s[0], &s[1], &s[2]);
        if !(area.abs() > 1e-12) {
            continue;
        }
        if area < 0.0 {
            s.swap(1, 2);
            q.swap(1, 2);
            order.swap(1, 2);
            area = -area;
        }
        let lo_x = s.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let hi_x = s.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let lo_y = s.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let hi_y = s.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        if hi_x < 0.0 || hi_y < 0.0 || lo_x > w as f64 || lo_y > h as f64 {
            continue;
        }
        let x0 = (lo_x - 0.5).ceil().max(0.0) as usize;
        let y0 = (lo_y - 0.5).ceil().max(0.0) as usize;
        let x1 = ((hi_x - 0.5).floor().min(w as f64 - 1.0)).max(-1.0);
        let y1 = ((hi_y - 0.5).floor().min(h as f64 - 1.0)).max(-1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        let (x1, y1) = (x1 as usize, y1 as usize);
        let own = [
            owns_edge(&s[1], &s[2]),
            owns_edge(&s[2], &s[0]),
            owns_edge(&s[0], &s[1]),
        ];
        let inv_z = [1.0 / q[0].z, 1.0 / q[1].z, 1.0 / q[2].z];

        for py in y0..=y1 {
            for px in x0..=x1 {
                let p = Vector2::new(px as f64 + 0.5, py as f64 + 0.5);
                let e = [edge(&s[1], &s[2], &p), edge(&s[2], &s[0], &p), edge(&s[0], &s[1], &p)];
                let inside = (0..3).all(|k| e[k] > 0.0 || (e[k] == 0.0 && own[k]));
                if !inside {
                    continue;
                }
                let lam = [e[0] / area, e[1] / area, e[2] / area];
                let wsum = lam[0] * inv_z[0] + lam[1] * inv_z[1] + lam[2] * inv_z[2];
                let depth = 1.0 / wsum;
                let idx = py * w + px;
                if depth < maps.depth[idx] {
                    let mut alpha = Vector3::zeros();
                    for k in 0..3 {
                        alpha[order[k]] = lam[k] * inv_z[k] / wsum;
                    }
                    maps.depth[idx] = depth;
                    maps.face[idx] = Some(j);
                    maps.bary[idx] = alpha;
                }
            }
        }
    }
    maps
}

/// Outcome of testing one sample against one view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    Visible,
    OutOfBounds,
    Occluded,
    BehindCamera,
}

/// A surface point produced by rasterizing from the sampling camera.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSample {
    /// Source pixel in the sampling camera.
    pub pixel: (usize, usize),
    pub face: usize,
    pub alpha: Vector3<f64>,
    pub point: Vector3<f64>,
    /// One entry per tested view.
    pub visibility: Vec<Visibility>,
}

impl SurfaceSample {
    pub fn visible_in_all(&self) -> bool {
        self.visibility.iter().all(|v| *v == Visibility::Visible)
    }
}

/// Depth-test visibility of `p` in `camera` against that camera's own raster maps.
pub fn test_visibility(p: &Vector3<f64>, camera: &Camera, maps: &RasterMaps, tolerance: f64) -> Visibility {
    let Ok((x, depth)) = camera.project(p) else {
        return Visibility::BehindCamera;
    };
    if !camera.in_bounds(&x) {
        return Visibility::OutOfBounds;
    }
    match maps.interpolate_depth(&x) {
        Some(d) if (depth - d).abs() < tolerance => Visibility::Visible,
        _ => Visibility::Occluded,
    }
}

/// One sample per covered pixel of `sampler_maps`, each tested against every
/// `(camera, maps)` view.
pub fn sample_visibility_with_maps(
    mesh: &TriangleMesh,
    sampler_maps: &RasterMaps,
    views: &[(&Camera, &RasterMaps)],
    tolerance: f64,
) -> Vec<SurfaceSample> {
    sampler_maps
        .covered()
        .map(|(x, y, face)| {
            let alpha = sampler_maps.bary[sampler_maps.index(x, y)];
            let f = mesh.faces[face];
            let point = mesh.vertices[f[0]] * alpha.x + mesh.vertices[f[1]] * alpha.y + mesh.vertices[f[2]] * alpha.z;
            let visibility = views
                .iter()
                .map(|(cam, maps)| test_visibility(&point, cam, maps, tolerance))
                .collect();
            SurfaceSample {
                pixel: (x, y),
                face,
                alpha,
                point,
                visibility,
            }
        })
        .collect()
}

/// All samples rasterized from `sampler`, with per-view visibility flags.
pub fn sample_visibility(
    mesh: &TriangleMesh,
    sampler: &Camera,
    views: &[Camera],
    tolerance: f64,
) -> Vec<SurfaceSample> {
    let sampler_maps = rasterize(mesh, sampler);
    let view_maps: Vec<RasterMaps> = views.iter().map(|c| rasterize(mesh, c)).collect();
    let pairs: Vec<(&Camera, &RasterMaps)> = views.iter().zip(view_maps.iter()).collect();
    sample_visibility_with_maps(mesh, &sampler_maps, &pairs, tolerance)
}

/// Samples rasterized from `sampler` that are visible in every view.
pub fn visible_samples(mesh: &TriangleMesh, sampler: &Camera, views: &[Camera], tolerance: f64) -> Vec<SurfaceSample> {
    let mut samples = sample_visibility(mesh, sampler, views, tolerance);
    samples.retain(SurfaceSample::visible_in_all);
    samples
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ray_triangle_intersect, Ray};

    fn quad(z: f64, half: f64, base: usize) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
        (
            vec![
                Vector3::new(-half, -half, z),
                Vector3::new(half, -half, z),
                Vector3::new(half, half, z),
                Vector3::new(-half, half, z),
            ],
            vec![[base, base + 1, base + 2], [base, base + 2, base + 3]],
        )
    }

    #[test]
    fn empty_mesh_gives_empty_maps() {
        let cam = Camera::identity(20.0, 8.0, 8.0, 16, 16);
        let maps = rasterize(&TriangleMesh::default(), &cam);
        assert!(maps.face.iter().all(Option::is_none));
        assert!(maps.depth.iter().all(|d| *d == f64::INFINITY));
    }

    #[test]
    fn large_triangle_center_pixel() {
        let cam = Camera::identity(20.0, 8.0, 8.0, 16, 16);
        let mesh = TriangleMesh::new(
            vec![
                Vector3::new(-10.0, -10.0, 2.0),
                Vector3::new(10.0, -10.0, 2.0),
                Vector3::new(0.0, 10.0, 2.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let maps = rasterize(&mesh, &cam);
        let i = maps.index(8, 8);
        assert_eq!(maps.face[i], Some(0));
        assert!((maps.bary[i].sum() - 1.0).abs() < 1e-12);
        assert!((maps.depth[i] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stacked_planes_resolve_nearest() {
        let cam = Camera::identity(32.0, 16.0, 16.0, 32, 32);
        let (mut v, mut f) = quad(3.0, 5.0, 0);
        let (v2, f2) = quad(2.0, 0.5, 4);
        v.extend(v2);
        f.extend(f2);
        let mesh = TriangleMesh::new(v, f).unwrap();
        let maps = rasterize(&mesh, &cam);
        for (x, y, face) in maps.covered() {
            let ray = cam.unproject(&Vector2::new(x as f64 + 0.5, y as f64 + 0.5));
            let (best, _) = (0..mesh.faces.len())
                .filter_map(|j| ray_triangle_intersect(&ray, &mesh.triangle(j).unwrap()).map(|(t, _)| (j, t)))
                .fold(
                    (usize::MAX, f64::INFINITY),
                    |acc, (j, t)| if t < acc.1 { (j, t) } else { acc },
                );
            assert_eq!(face >= 2, best >= 2, "pixel {x},{y}");
        }
        assert_eq!(maps.face[maps.index(16, 16)].map(|f| f >= 2), Some(true));
        assert_eq!(maps.face[maps.index(2, 2)].map(|f| f >= 2), Some(false));
    }

    #[test]
    fn shared_edge_drawn_once() {
        // Diagonal of the quad passes exactly through pixel centers.
        let cam = Camera::identity(8.0, 8.0, 8.0, 16, 16);
        let (v, f) = quad(1.0, 1.0, 0);
        let mesh = TriangleMesh::new(v, f).unwrap();
        let maps = rasterize(&mesh, &cam);
        assert_eq!(maps.coverage(), 16 * 16);
    }

    #[test]
    fn behind_faces_are_skipped() {
        let cam = Camera::identity(8.0, 8.0, 8.0, 16, 16);
        let mesh = TriangleMesh::new(
            vec![
                Vector3::new(-1.0, -1.0, 1.0),
                Vector3::new(1.0, -1.0, 1.0),
                Vector3::new(0.0, 1.0, -1.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let maps = rasterize(&mesh, &cam);
        assert_eq!(maps.skipped_faces, 1);
        assert_eq!(maps.coverage(), 0);
    }

    #[test]
    fn inverse_depth_interpolation_is_exact_on_planes() {
        let cam = Camera::identity(20.0, 16.0, 16.0, 32, 32);
        let mesh = TriangleMesh::new(
            vec![
                Vector3::new(-10.0, -10.0, 2.0),
                Vector3::new(10.0, -10.0, 6.0),
                Vector3::new(0.0, 10.0, 3.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let maps = rasterize(&mesh, &cam);
        let x = Vector2::new(15.3, 17.8);
        let ray = cam.unproject(&x);
        let (t, _) = ray_triangle_intersect(&ray, &mesh.triangle(0).unwrap()).unwrap();
        let truth = cam.to_camera(&ray.at(t)).z;
        assert!((maps.interpolate_depth(&x).unwrap() - truth).abs() < 1e-12);
    }

    #[test]
    fn occluded_plane_is_invisible_in_one_view() {
        // Far plane at z=3 facing both cameras; a small occluder sits in
        // front of it on the line of sight of camera `a` only.
        let (mut v, mut f) = quad(3.0, 1.0, 0);
        let (occ, occ_f) = quad(0.0, 0.35, 4);
        v.extend(occ.into_iter().map(|p| p + Vector3::new(-1.2, 0.0, 1.0)));
        f.extend(occ_f);
        let mesh = TriangleMesh::new(v, f).unwrap();
        let a = Camera::look_at(
            Vector3::new(-2.0, 0.0, -2.0),
            Vector3::new(0.0, 0.0, 3.0),
            Vector3::y(),
            40.0,
            64,
            64,
        )
        .unwrap();
        let b = Camera::look_at(
            Vector3::new(2.0, 0.0, -2.0),
            Vector3::new(0.0, 0.0, 3.0),
            Vector3::y(),
            40.0,
            64,
            64,
        )
        .unwrap();
        let sampler = Camera::look_at(
            Vector3::new(0.0, 0.0, -2.0),
            Vector3::new(0.0, 0.0, 3.0),
            Vector3::y(),
            40.0,
            64,
            64,
        )
        .unwrap();
        let samples = sample_visibility(&mesh, &sampler, &[a.clone(), b.clone()], DEFAULT_VISIBILITY_TOLERANCE);
        let far: Vec<_> = samples.iter().filter(|s| s.face < 2).collect();
        let mut hidden_in_a = 0;
        for s in &far {
            // Ray-cast oracle for view a.
            let ray = Ray::new(a.center(), s.point - a.center());
            let dist = (s.point - a.center()).norm();
            let blocked = (2..4).any(|j| {
                ray_triangle_intersect(&ray, &mesh.triangle(j).unwrap()).is_some_and(|(t, _)| t < dist - 1e-6)
            });
            if blocked {
                hidden_in_a += 1;
                assert_ne!(s.visibility[0], Visibility::Visible);
                // Near the quad's silhouette in b only some depth taps are covered.
                if s.point.x.abs() < 0.85 && s.point.y.abs() < 0.85 {
                    assert_eq!(s.visibility[1], Visibility::Visible);
                }
            }
        }
        assert!(hidden_in_a > 20);
    }
}
