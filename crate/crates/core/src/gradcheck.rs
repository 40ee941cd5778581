//! Central finite-difference checks of every analytic derivative in the
//! pipeline, each over many random cases.

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::{Camera, TriangleMesh};
use crate::image::Image;
use crate::optim::FrameSet;
use crate::photometric::{evaluate_pair, FrozenSamples, PairEvaluation, PairOptions, View};
use crate::prior::{backpropagate, generate, LinearShapePrior, ShapeState};
use crate::raster::rasterize;
use crate::scene::{family_prior, make_sequence, OrbitRig, Panorama, Pattern, TextureSpec};
use crate::transforms::{similarity_jacobian, so3_exp, so3_exp_jacobian, SimilarityParams, DEFAULT_TAYLOR_ORDER};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.cases > 0 && self.max_rel_error < self.tolerance
    }
}

/// `‖a − f‖ / max(‖a‖, ‖f‖, 1e-12)` in the Frobenius norm.
pub fn relative_error(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    let scale = analytic.norm().max(numeric.norm()).max(1e-12);
    (analytic - numeric).norm() / scale
}

/// Column `k` is `(f(x + hₖeₖ) − f(x − hₖeₖ)) / 2hₖ`.
pub fn central_differences(x: &[f64], steps: &[f64], f: impl Fn(&[f64]) -> DVector<f64>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = (0..x.len())
        .map(|k| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += steps[k];
            xm[k] -= steps[k];
            (f(&xp) - f(&xm)) / (2.0 * steps[k])
        })
        .collect();
    DMatrix::from_columns(&cols)
}

fn unit_ball(rng: &mut impl Rng, radius: f64) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}

fn random_camera(rng: &mut impl Rng) -> Camera {
    loop {
        let eye = unit_ball(rng, 1.0)
            .try_normalize(1e-3)
            .map(|d| d * rng.random_range(2.0..5.0));
        let Some(eye) = eye else { continue };
        let target = unit_ball(rng, 0.3);
        let size = rng.random_range(32..256);
        if let Ok(c) = Camera::look_at(eye, target, Vector3::y(), rng.random_range(40.0..400.0), size, size) {
            return c;
        }
    }
}

fn finish(name: &'static str, errors: impl IntoIterator<Item = f64>, tolerance: f64) -> CheckResult {
    let (mut cases, mut worst) = (0, 0.0f64);
    for e in errors {
        cases += 1;
        worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
    }
    CheckResult {
        name,
        cases,
        max_rel_error: worst,
        tolerance,
    }
}

pub fn check_project_jacobian(cases: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let errors: Vec<f64> = (0..cases)
        .map(|_| {
            let cam = random_camera(&mut rng);
            let p = unit_ball(&mut rng, 1.0);
            let an = DMatrix::from_column_slice(2, 3, cam.project_jacobian(&p).unwrap().as_slice());
            let fd = central_differences(p.as_slice(), &[1e-6; 3], |x| {
                let (q, _) = cam.project(&Vector3::from_column_slice(x)).unwrap();
                DVector::from_column_slice(q.as_slice())
            });
            relative_error(&an, &fd)
        })
        .collect();
    finish("project_jacobian", errors, 1e-5)
}

pub fn check_so3_exp_jacobian(cases: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let errors: Vec<f64> = (0..cases)
        .map(|_| {
            let w = unit_ball(&mut rng, std::f64::consts::PI);
            let j = so3_exp_jacobian(&w, DEFAULT_TAYLOR_ORDER);
            let an = DMatrix::from_columns(&j.map(|m| DVector::from_column_slice(m.as_slice())));
            let fd = central_differences(w.as_slice(), &[1e-6; 3], |x| {
                let r = so3_exp(&Vector3::from_column_slice(x), DEFAULT_TAYLOR_ORDER);
                DVector::from_column_slice(r.as_slice())
            });
            relative_error(&an, &fd)
        })
        .collect();
    finish("so3_exp_jacobian", errors, 1e-5)
}

fn random_theta(rng: &mut impl Rng) -> SimilarityParams {
    SimilarityParams {
        s: rng.random_range(-0.5..0.5),
        omega: unit_ball(rng, std::f64::consts::PI),
        t: unit_ball(rng, 1.0),
    }
}

pub fn check_similarity_jacobian(cases: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let errors: Vec<f64> = (0..cases)
        .map(|_| {
            let v = unit_ball(&mut rng, 1.5);
            let theta = random_theta(&mut rng);
            let an = DMatrix::from_column_slice(3, 7, similarity_jacobian(&v, &theta).as_slice());
            let fd = central_differences(&theta.to_array(), &[1e-6; 7], |x| {
                let q = SimilarityParams::from_slice(x).unwrap().apply(&v);
                DVector::from_column_slice(q.as_slice())
            });
            relative_error(&an, &fd)
        })
        .collect();
    finish("similarity_jacobian", errors, 1e-5)
}

fn random_linear_prior(rng: &mut impl Rng, n: usize, k: usize) -> LinearShapePrior {
    let vertices: Vec<Vector3<f64>> = (0..n).map(|_| unit_ball(rng, 1.0)).collect();
    let faces = (0..n - 2).map(|i| [i, i + 1, i + 2]).collect();
    let template = TriangleMesh::new(vertices, faces).unwrap();
    let basis = DMatrix::from_fn(3 * n, k, |_, _| rng.random_range(-0.2..0.2));
    LinearShapePrior::new(template, basis, vec![1.0; k]).unwrap()
}

pub fn check_generate_jacobian(cases: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let errors: Vec<f64> = (0..cases)
        .map(|_| {
            let k = rng.random_range(1..6);
            let prior = random_linear_prior(&mut rng, 12, k);
            let code: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let state = ShapeState::new(code, random_theta(&mut rng));
            let an = prior.generate_jacobian(&state).unwrap();
            let steps: Vec<f64> = (0..state.dim()).map(|i| if i < k { 1e-5 } else { 1e-6 }).collect();
            let fd = central_differences(&state.to_vec(), &steps, |x| {
                let m = generate(&prior, &ShapeState::from_slice(x, k).unwrap()).unwrap();
                DVector::from_iterator(3 * m.vertices.len(), m.vertices.iter().flat_map(|v| v.iter().copied()))
            });
            relative_error(&an, &fd)
        })
        .collect();
    finish("generate_jacobian", errors, 1e-5)
}

/// Points are drawn away from bilinear cell boundaries, where the sampled
/// image is not differentiable.
pub fn check_sample_gradient(cases: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let errors: Vec<f64> = (0..cases)
        .map(|_| {
            let img = Image::from_fn(16, 12, |_, _| Vector3::from_fn(|_, _| rng.random::<f64>()));
            let x = loop {
                let x = Vector2::new(rng.random_range(0.5..15.5), rng.random_range(0.5..11.5));
                if !near_cell_edge(x.x, 1e-4) && !near_cell_edge(x.y, 1e-4) {
                    break x;
                }
            };
            let g = img.sample_gradient(&x);
            let an = DMatrix::from_fn(3, 2, |c, d| g[(d, c)]);
            let fd = central_differences(x.as_slice(), &[h; 2], |p| {
                DVector::from_column_slice(img.sample_bilinear(&Vector2::new(p[0], p[1])).as_slice())
            });
            relative_error(&an, &fd)
        })
        .collect();
    finish("sample_gradient", errors, 1e-5)
}

/// Small smooth-textured scene shared by the photometric checks.
pub struct GradcheckScene {
    pub prior: LinearShapePrior,
    pub frames: FrameSet,
    pub gt_state: ShapeState,
}

impl GradcheckScene {
    pub fn new(seed: u64) -> Result<Self> {
        let (prior, member) = family_prior(12, 6, 2, seed)?;
        let code = prior.encode(&member)?;
        let rig = OrbitRig::with_fov(8, vec![30.0], 3.0, 64, 64, 60.0);
        let texture = TextureSpec {
            pattern: Pattern::Smooth,
            seed,
            ..Default::default()
        };
        let seq = make_sequence(&prior, &code, &rig, &Panorama::procedural(128, seed)?, &texture)?;
        Ok(GradcheckScene {
            prior,
            frames: seq.frames,
            gt_state: seq.gt_state,
        })
    }
}

fn near_cell_edge(c: f64, margin: f64) -> bool {
    let f = (c - 0.5).rem_euclid(1.0);
    f < margin || f > 1.0 - margin
}

/// Drops samples whose projection in either view lies within `margin` pixels
/// of a bilinear cell boundary, where the loss is not differentiable.
fn away_from_cell_edges(frozen: FrozenSamples, eval: &PairEvaluation, margin: f64) -> FrozenSamples {
    let keep: Vec<bool> = eval
        .samples
        .iter()
        .map(|s| {
            [s.x_a, s.x_b]
                .iter()
                .all(|x| !near_cell_edge(x.x, margin) && !near_cell_edge(x.y, margin))
        })
        .collect();
    let pick = |v: Vec<Vector3<f64>>| v.into_iter().zip(&keep).filter(|(_, k)| **k).map(|(x, _)| x).collect();
    FrozenSamples {
        faces: frozen
            .faces
            .into_iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(x, _)| x)
            .collect(),
        alphas: pick(frozen.alphas),
        signs: pick(frozen.signs),
    }
}

/// Frozen-sampling check of `∂L/∂[z′; θ]` for one pair loss: the sample set,
/// barycentrics and ℓ1 signs are fixed at the evaluation state.
pub fn check_photometric_gradient(cases: usize, seed: u64) -> Result<CheckResult> {
    let scene = GradcheckScene::new(seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37);
    let k = scene.gt_state.code.len();
    let f = scene.frames.len();
    let steps: Vec<f64> = (0..k + 7).map(|i| if i < k { 1e-5 } else { 1e-6 }).collect();
    let mut errors = Vec::with_capacity(cases);
    while errors.len() < cases {
        let mut x = scene.gt_state.to_vec();
        for v in x.iter_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
        let state = ShapeState::from_slice(&x, k)?;
        let a = rng.random_range(0..f);
        let b = (a + 1) % f;
        let (ia, ca) = &scene.frames.frames[a];
        let (ib, cb) = &scene.frames.frames[b];
        let (va, vb) = (View::new(ia, ca), View::new(ib, cb));
        let mesh = generate(&scene.prior, &state)?;
        let (ma, mb) = (rasterize(&mesh, ca), rasterize(&mesh, cb));
        let Ok(eval) = evaluate_pair(&mesh, va, vb, Some(&ma), Some(&mb), &PairOptions::default(), false) else {
            continue;
        };
        let frozen = away_from_cell_edges(FrozenSamples::from_evaluation(&eval), &eval, 1e-3);
        if frozen.is_empty() {
            continue;
        }
        let vgrad = frozen.gradient(&mesh, va, vb)?;
        let an = DMatrix::from_row_slice(1, k + 7, &backpropagate(&scene.prior, &state, &vgrad)?);
        let fd = central_differences(&x, &steps, |p| {
            let m = generate(&scene.prior, &ShapeState::from_slice(p, k).unwrap()).unwrap();
            DVector::from_element(1, frozen.loss(&m, va, vb).unwrap())
        });
        errors.push(relative_error(&an, &fd));
    }
    Ok(finish("photometric_gradient", errors, 1e-3))
}

/// Every check with `cases` random cases each.
pub fn run_all(cases: usize, seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_project_jacobian(cases, seed),
        check_so3_exp_jacobian(cases, seed),
        check_similarity_jacobian(cases, seed),
        check_generate_jacobian(cases, seed),
        check_sample_gradient(cases, seed),
        check_photometric_gradient(cases, seed)?,
    ])
}
