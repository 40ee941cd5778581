//! Pairwise photometric consistency: surface points sampled on the mesh are
//! projected into two frames and their colors compared under an ℓ1 norm.
//!
//! Points are rasterized from a third, bisecting camera by default. Sampling
//! from one of the two input cameras instead makes that camera's projection
//! an identity in the vertices (the ray through a pixel always reprojects onto
//! the same pixel), so its ∂x/∂V vanishes; [`Sampler::FromFirst`] and
//! [`Sampler::FromSecond`] exist to exhibit exactly that.

use nalgebra::{Matrix2x3, SMatrix, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{barycentric_jacobian, raycast_point_jacobian, Camera, Ray, TriangleMesh};
use crate::image::Image;
use crate::prior::ShapeState;
use crate::raster::{rasterize, test_visibility, RasterMaps, Visibility, DEFAULT_VISIBILITY_TOLERANCE};
use crate::transforms::virtual_camera;

/// An input frame: image plus the camera that captured it.
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    pub image: &'a Image,
    pub camera: &'a Camera,
}

impl<'a> View<'a> {
    pub fn new(image: &'a Image, camera: &'a Camera) -> Self {
        View { image, camera }
    }
}

/// Which camera the surface samples are rasterized from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampler {
    /// Slerp/center bisection of the two input cameras.
    #[default]
    Virtual,
    /// The first input camera; points are ray-cast through its pixel centers.
    FromFirst,
    /// The second input camera; points are ray-cast through its pixel centers.
    FromSecond,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOptions {
    pub sampler: Sampler,
    pub visibility_tolerance: f64,
    /// Resolution of the bisecting camera; `None` keeps the input resolution.
    pub virtual_size: Option<(usize, usize)>,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            sampler: Sampler::Virtual,
            visibility_tolerance: DEFAULT_VISIBILITY_TOLERANCE,
            virtual_size: None,
        }
    }
}

/// One included sample of a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub face: usize,
    pub alpha: Vector3<f64>,
    pub point: Vector3<f64>,
    pub x_a: Vector2<f64>,
    pub x_b: Vector2<f64>,
    /// `I_a(x_a) − I_b(x_b)` per channel.
    pub residual: Vector3<f64>,
    /// Set when the sample was ray-cast from an input camera.
    pub ray: Option<Ray>,
}

/// Loss, bookkeeping and (optionally) vertex gradients for one frame pair.
#[derive(Debug, Clone, Default)]
pub struct PairEvaluation {
    /// Mean over included samples of `Σ_c |I_a − I_b|`.
    pub loss: f64,
    pub candidates: usize,
    pub out_of_bounds: usize,
    pub occluded: usize,
    pub samples: Vec<PairSample>,
    /// Gradient flowing through the projection into the first view.
    pub grad_a: Vec<Vector3<f64>>,
    /// Gradient flowing through the projection into the second view.
    pub grad_b: Vec<Vector3<f64>>,
}

impl PairEvaluation {
    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    /// Total per-vertex gradient.
    pub fn vertex_gradient(&self) -> Vec<Vector3<f64>> {
        self.grad_a.iter().zip(&self.grad_b).map(|(a, b)| a + b).collect()
    }
}

/// ℓ1 subgradient with `sign(0) = 0`.
fn l1_sign(r: &Vector3<f64>) -> Vector3<f64> {
    r.map(|v| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    })
}

/// `∂/∂p` of `σᵀ I(π(p))`.
fn color_point_gradient(view: &View, x: &Vector2<f64>, p: &Vector3<f64>, sign: &Vector3<f64>) -> Result<Vector3<f64>> {
    let g: Matrix2x3<f64> = view.image.sample_gradient(x);
    let j = view.camera.project_jacobian(p)?;
    Ok(j.transpose() * (g * sign))
}

fn corner_jacobian(mesh: &TriangleMesh, s: &PairSample) -> SMatrix<f64, 3, 9> {
    match &s.ray {
        None => barycentric_jacobian(&s.alpha),
        Some(ray) => {
            let f = mesh.faces[s.face];
            let tri = [mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]];
            raycast_point_jacobian(ray, &tri, &s.point)
        }
    }
}

/// `∂x_a/∂V_j` and `∂x_b/∂V_j` (each 2×9) for one sample.
pub fn sample_projection_jacobians(
    mesh: &TriangleMesh,
    a: &Camera,
    b: &Camera,
    sample: &PairSample,
) -> Result<(SMatrix<f64, 2, 9>, SMatrix<f64, 2, 9>)> {
    let dp = corner_jacobian(mesh, sample);
    Ok((
        a.project_jacobian(&sample.point)? * dp,
        b.project_jacobian(&sample.point)? * dp,
    ))
}

/// Photometric loss and gradient for one frame pair, with optional
/// precomputed raster maps of the mesh as seen by each input camera.
pub fn evaluate_pair(
    mesh: &TriangleMesh,
    a: View,
    b: View,
    maps_a: Option<&RasterMaps>,
    maps_b: Option<&RasterMaps>,
    options: &PairOptions,
    with_gradient: bool,
) -> Result<PairEvaluation> {
    if mesh.is_empty() {
        return Err(Error::InvalidMesh("mesh has no faces".into()));
    }
    let own_a;
    let maps_a = match maps_a {
        Some(m) => m,
        None => {
            own_a = rasterize(mesh, a.camera);
            &own_a
        }
    };
    let own_b;
    let maps_b = match maps_b {
        Some(m) => m,
        None => {
            own_b = rasterize(mesh, b.camera);
            &own_b
        }
    };
    let (sampler_cam, sampler_maps, raycast) = match options.sampler {
        Sampler::Virtual => {
            let mut cam = virtual_camera(a.camera, b.camera)?;
            if let Some((w, h)) = options.virtual_size {
                cam = cam.resized(w, h);
            }
            let maps = rasterize(mesh, &cam);
            (cam, maps, false)
        }
        Sampler::FromFirst => (a.camera.clone(), maps_a.clone(), true),
        Sampler::FromSecond => (b.camera.clone(), maps_b.clone(), true),
    };

    let mut eval = PairEvaluation::default();
    for (px, py, face) in sampler_maps.covered() {
        eval.candidates += 1;
        let alpha = sampler_maps.bary[sampler_maps.index(px, py)];
        let f = mesh.faces[face];
        let point = mesh.vertices[f[0]] * alpha.x + mesh.vertices[f[1]] * alpha.y + mesh.vertices[f[2]] * alpha.z;
        let va = test_visibility(&point, a.camera, maps_a, options.visibility_tolerance);
        let vb = test_visibility(&point, b.camera, maps_b, options.visibility_tolerance);
        let outside = |v: Visibility| matches!(v, Visibility::OutOfBounds | Visibility::BehindCamera);
        if outside(va) || outside(vb) {
            eval.out_of_bounds += 1;
            continue;
        }
        if va != Visibility::Visible || vb != Visibility::Visible {
            eval.occluded += 1;
            continue;
        }
        let (x_a, _) = a.camera.project(&point)?;
        let (x_b, _) = b.camera.project(&point)?;
        let residual = a.image.sample_bilinear(&x_a) - b.image.sample_bilinear(&x_b);
        let ray = raycast.then(|| sampler_cam.unproject(&Vector2::new(px as f64 + 0.5, py as f64 + 0.5)));
        eval.samples.push(PairSample {
            face,
            alpha,
            point,
            x_a,
            x_b,
            residual,
            ray,
        });
    }
    if eval.samples.is_empty() {
        return Err(Error::NoVisibleSamples);
    }
    let n = eval.samples.len() as f64;
    eval.loss = eval.samples.iter().map(|s| s.residual.abs().sum()).sum::<f64>() / n;

    if with_gradient {
        let nv = mesh.vertices.len();
        eval.grad_a = vec![Vector3::zeros(); nv];
        eval.grad_b = vec![Vector3::zeros(); nv];
        for s in &eval.samples {
            let sign = l1_sign(&s.residual);
            let ga = color_point_gradient(&a, &s.x_a, &s.point, &sign)? / n;
            let gb = -color_point_gradient(&b, &s.x_b, &s.point, &sign)? / n;
            let dp = corner_jacobian(mesh, s);
            let ca = dp.transpose() * ga;
            let cb = dp.transpose() * gb;
            for (k, &v) in mesh.faces[s.face].iter().enumerate() {
                eval.grad_a[v] += ca.fixed_rows::<3>(3 * k);
                eval.grad_b[v] += cb.fixed_rows::<3>(3 * k);
            }
        }
    }
    Ok(eval)
}

/// Mean ℓ1 photometric loss of a frame pair, sampled from the bisecting camera.
pub fn photometric_loss(
    ia: &Image,
    ib: &Image,
    ca: &Camera,
    cb: &Camera,
    mesh: &TriangleMesh,
) -> Result<PairEvaluation> {
    evaluate_pair(
        mesh,
        View::new(ia, ca),
        View::new(ib, cb),
        None,
        None,
        &PairOptions::default(),
        false,
    )
}

/// As [`photometric_loss`], with per-vertex gradients filled in.
pub fn photometric_gradient(
    ia: &Image,
    ib: &Image,
    ca: &Camera,
    cb: &Camera,
    mesh: &TriangleMesh,
) -> Result<PairEvaluation> {
    evaluate_pair(
        mesh,
        View::new(ia, ca),
        View::new(ib, cb),
        None,
        None,
        &PairOptions::default(),
        true,
    )
}

/// A sample set with fixed faces, barycentrics and ℓ1 signs, so the loss
/// becomes a smooth function of the vertices (away from pixel-cell borders).
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenSamples {
    pub faces: Vec<usize>,
    pub alphas: Vec<Vector3<f64>>,
    pub signs: Vec<Vector3<f64>>,
}

impl FrozenSamples {
    pub fn from_evaluation(eval: &PairEvaluation) -> Self {
        FrozenSamples {
            faces: eval.samples.iter().map(|s| s.face).collect(),
            alphas: eval.samples.iter().map(|s| s.alpha).collect(),
            signs: eval.samples.iter().map(|s| l1_sign(&s.residual)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    fn point(&self, mesh: &TriangleMesh, i: usize) -> Vector3<f64> {
        let f = mesh.faces[self.faces[i]];
        let a = self.alphas[i];
        mesh.vertices[f[0]] * a.x + mesh.vertices[f[1]] * a.y + mesh.vertices[f[2]] * a.z
    }

    /// `(1/n) Σ σᵢᵀ (I_a(π_a(pᵢ)) − I_b(π_b(pᵢ)))`.
    pub fn loss(&self, mesh: &TriangleMesh, a: View, b: View) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.len() {
            let p = self.point(mesh, i);
            let (xa, _) = a.camera.project(&p)?;
            let (xb, _) = b.camera.project(&p)?;
            total += self.signs[i].dot(&(a.image.sample_bilinear(&xa) - b.image.sample_bilinear(&xb)));
        }
        Ok(total / self.len().max(1) as f64)
    }

    pub fn gradient(&self, mesh: &TriangleMesh, a: View, b: View) -> Result<Vec<Vector3<f64>>> {
        let n = self.len().max(1) as f64;
        let mut grad = vec![Vector3::zeros(); mesh.vertices.len()];
        for i in 0..self.len() {
            let p = self.point(mesh, i);
            let (xa, _) = a.camera.project(&p)?;
            let (xb, _) = b.camera.project(&p)?;
            let g = (color_point_gradient(&a, &xa, &p, &self.signs[i])?
                - color_point_gradient(&b, &xb, &p, &self.signs[i])?)
                / n;
            let f = mesh.faces[self.faces[i]];
            for k in 0..3 {
                grad[f[k]] += g * self.alphas[i][k];
            }
        }
        Ok(grad)
    }
}

/// Value and gradient of `λ_code·‖z′ − z₀‖² + λ_scale·(−s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerValue {
    pub value: f64,
    /// Unweighted `‖z′ − z₀‖²`.
    pub code_term: f64,
    /// Unweighted `−s`.
    pub scale_term: f64,
    /// Over `[z′; s; ω; t]`.
    pub gradient: Vec<f64>,
}

pub fn regularizer(state: &ShapeState, z0: &[f64], lambda_code: f64, lambda_scale: f64) -> Result<RegularizerValue> {
    if z0.len() != state.code.len() {
        return Err(Error::DimensionMismatch {
            expected: state.code.len(),
            actual: z0.len(),
        });
    }
    let k = state.code.len();
    let mut gradient = vec![0.0; state.dim()];
    let mut code_term = 0.0;
    for i in 0..k {
        let d = state.code[i] - z0[i];
        code_term += d * d;
        gradient[i] = 2.0 * lambda_code * d;
    }
    let scale_term = -state.transform.s;
    gradient[k] = -lambda_scale;
    Ok(RegularizerValue {
        value: lambda_code * code_term + lambda_scale * scale_term,
        code_term,
        scale_term,
        gradient,
    })
}
