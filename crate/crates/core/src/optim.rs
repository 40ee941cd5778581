//! Adam minimization of the summed pairwise photometric loss plus the latent
//! trust-region and scale regularizers, over `[z′; s; ω; t]`.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::image::Image;
use crate::photometric::{evaluate_pair, regularizer, PairOptions, Sampler, View};
use crate::prior::{backpropagate, generate, ShapeGenerator, ShapeState};
use crate::raster::{rasterize, RasterMaps, DEFAULT_VISIBILITY_TOLERANCE};

/// How frame pairs are chosen at each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PairPolicy {
    /// Every unordered pair.
    All,
    /// `count` distinct pairs: the cyclically next adjacent pair `(k, k+1)`
    /// plus random pairs whose viewing directions differ by at most
    /// `max_angle` degrees (unbounded when `None`).
    Random { count: usize, max_angle: Option<f64> },
}

impl Default for PairPolicy {
    fn default() -> Self {
        PairPolicy::Random {
            count: 8,
            max_angle: Some(DEFAULT_MAX_PAIR_ANGLE),
        }
    }
}

/// Default bound on the angle between paired viewing directions, in degrees.
pub const DEFAULT_MAX_PAIR_ANGLE: f64 = 32.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub lambda_code: f64,
    pub lambda_scale: f64,
    /// Bisecting-camera resolution; input resolution when unset.
    pub virtual_size: Option<(usize, usize)>,
    pub pairs: PairPolicy,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub visibility_tolerance: f64,
    /// Keep the latent code fixed and optimize only the similarity transform.
    pub fix_code: bool,
    /// Evaluate pairs on the rayon pool. Results are reduced in pair order,
    /// so the trace does not depend on this flag.
    pub parallel: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 0.003,
            iterations: 100,
            lambda_code: 0.05,
            lambda_scale: 0.02,
            virtual_size: None,
            pairs: PairPolicy::default(),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            visibility_tolerance: DEFAULT_VISIBILITY_TOLERANCE,
            fix_code: false,
            parallel: true,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.lambda_code >= 0.0 && self.lambda_scale >= 0.0) {
            return bad("penalty weights must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("invalid Adam hyperparameters");
        }
        if !(self.visibility_tolerance > 0.0) {
            return bad("visibility_tolerance must be positive");
        }
        if let PairPolicy::Random { count, max_angle } = self.pairs {
            if count == 0 || max_angle.is_some_and(|a| !(a > 0.0)) {
                return bad("pair count and max_angle must be positive");
            }
        }
        if let Some((w, h)) = self.virtual_size {
            if w == 0 || h == 0 {
                return bad("virtual_size must be non-empty");
            }
        }
        Ok(())
    }
}

/// Ordered frames with their cameras.
#[derive(Debug, Clone)]
pub struct FrameSet {
    pub frames: Vec<(Image, Camera)>,
}

impl FrameSet {
    pub fn new(frames: Vec<(Image, Camera)>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InvalidConfig("a frame set needs at least two frames".into()));
        }
        let (img0, cam0) = &frames[0];
        for (img, cam) in &frames {
            if img.width() != img0.width() || img.height() != img0.height() {
                return Err(Error::InvalidConfig("frames differ in size".into()));
            }
            if img.width() != cam.width || img.height() != cam.height {
                return Err(Error::InvalidConfig("camera size does not match its image".into()));
            }
            if !cam.same_intrinsics(cam0, 1e-9) {
                return Err(Error::IntrinsicsMismatch);
            }
        }
        Ok(FrameSet { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn cameras(&self) -> Vec<Camera> {
        self.frames.iter().map(|(_, c)| c.clone()).collect()
    }

    /// Unit optical axes in world coordinates.
    pub fn view_directions(&self) -> Vec<Vector3<f64>> {
        self.frames.iter().map(|(_, c)| c.rotation.row(2).transpose()).collect()
    }

    fn view(&self, i: usize) -> View<'_> {
        View::new(&self.frames[i].0, &self.frames[i].1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub a: usize,
    pub b: usize,
    pub loss: f64,
    pub samples: usize,
    pub out_of_bounds: usize,
    pub occluded: usize,
    /// No sample was visible in both frames; the pair contributed nothing.
    pub no_visible_samples: bool,
}

/// Per-iteration objective breakdown, evaluated before the parameter update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: usize,
    pub total: f64,
    pub photometric: f64,
    pub code_term: f64,
    pub scale_term: f64,
    pub lambda_code: f64,
    pub lambda_scale: f64,
    pub samples: usize,
    pub out_of_bounds: usize,
    pub occluded: usize,
    pub pairs: Vec<PairReport>,
}

impl LossReport {
    pub fn decomposition_error(&self) -> f64 {
        (self.total - (self.photometric + self.lambda_code * self.code_term + self.lambda_scale * self.scale_term))
            .abs()
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            epsilon,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Frame pairs (`a < b`) used at iteration `iteration`, given each frame's
/// viewing direction.
pub fn select_pairs(
    policy: &PairPolicy,
    directions: &[Vector3<f64>],
    iteration: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let frames = directions.len();
    let all = (0..frames).flat_map(|a| (a + 1..frames).map(move |b| (a, b)));
    match *policy {
        PairPolicy::All => all.collect(),
        PairPolicy::Random { count, max_angle } => {
            let k = iteration % (frames - 1);
            let adjacent = (k, k + 1);
            let min_cos = max_angle.map_or(-1.0, |a| a.to_radians().cos());
            let pool: Vec<(usize, usize)> = all
                .filter(|&(a, b)| (a, b) != adjacent && directions[a].dot(&directions[b]) >= min_cos - 1e-12)
                .collect();
            let extra = (count - 1).min(pool.len());
            let mut pairs = vec![adjacent];
            let mut picked: Vec<usize> = sample(rng, pool.len(), extra).into_vec();
            picked.sort_unstable();
            pairs.extend(picked.into_iter().map(|i| pool[i]));
            pairs
        }
    }
}

fn par_map<T: Sync, R: Send>(parallel: bool, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

/// Result of a photometric objective evaluation at one state.
#[derive(Debug, Clone)]
pub struct ObjectiveEvaluation {
    pub report: LossReport,
    /// `∂total/∂[z′; θ]`.
    pub gradient: Vec<f64>,
}

/// Evaluates the regularized objective and its gradient at `state` for the
/// given frame pairs.
pub fn evaluate_objective<G: ShapeGenerator + Sync + ?Sized>(
    prior: &G,
    frames: &FrameSet,
    state: &ShapeState,
    z0: &[f64],
    pairs: &[(usize, usize)],
    config: &OptimConfig,
    iteration: usize,
) -> Result<ObjectiveEvaluation> {
    let mesh = generate(prior, state)?;
    let mut needed: Vec<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    needed.sort_unstable();
    needed.dedup();
    let maps: BTreeMap<usize, RasterMaps> = needed
        .iter()
        .copied()
        .zip(par_map(config.parallel, &needed, |&i| {
            rasterize(&mesh, &frames.frames[i].1)
        }))
        .collect();
    let options = PairOptions {
        sampler: Sampler::Virtual,
        visibility_tolerance: config.visibility_tolerance,
        virtual_size: config.virtual_size,
    };
    let results = par_map(config.parallel, pairs, |&(a, b)| {
        evaluate_pair(
            &mesh,
            frames.view(a),
            frames.view(b),
            maps.get(&a),
            maps.get(&b),
            &options,
            true,
        )
    });

    let mut vertex_grad = vec![Vector3::zeros(); mesh.vertices.len()];
    let mut photometric = 0.0;
    let mut pair_reports = Vec::with_capacity(pairs.len());
    for (&(a, b), res) in pairs.iter().zip(results) {
        match res {
            Ok(eval) => {
                photometric += eval.loss;
                for ((g, ga), gb) in vertex_grad.iter_mut().zip(&eval.grad_a).zip(&eval.grad_b) {
                    *g += ga + gb;
                }
                pair_reports.push(PairReport {
                    a,
                    b,
                    loss: eval.loss,
                    samples: eval.sample_count(),
                    out_of_bounds: eval.out_of_bounds,
                    occluded: eval.occluded,
                    no_visible_samples: false,
                });
            }
            Err(Error::NoVisibleSamples) => pair_reports.push(PairReport {
                a,
                b,
                loss: 0.0,
                samples: 0,
                out_of_bounds: 0,
                occluded: 0,
                no_visible_samples: true,
            }),
            Err(e) => return Err(e),
        }
    }

    let reg = regularizer(state, z0, config.lambda_code, config.lambda_scale)?;
    let mut gradient = backpropagate(prior, state, &vertex_grad)?;
    for (g, r) in gradient.iter_mut().zip(&reg.gradient) {
        *g += r;
    }
    if config.fix_code {
        gradient[..state.code.len()].iter_mut().for_each(|g| *g = 0.0);
    }
    let report = LossReport {
        iteration,
        total: photometric + config.lambda_code * reg.code_term + config.lambda_scale * reg.scale_term,
        photometric,
        code_term: reg.code_term,
        scale_term: reg.scale_term,
        lambda_code: config.lambda_code,
        lambda_scale: config.lambda_scale,
        samples: pair_reports.iter().map(|p| p.samples).sum(),
        out_of_bounds: pair_reports.iter().map(|p| p.out_of_bounds).sum(),
        occluded: pair_reports.iter().map(|p| p.occluded).sum(),
        pairs: pair_reports,
    };
    if !report.total.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss { iteration });
    }
    Ok(ObjectiveEvaluation { report, gradient })
}

/// Final state and the per-iteration trace of an optimization run.
#[derive(Debug, Clone)]
pub struct OptimOutcome {
    pub state: ShapeState,
    pub trace: Vec<LossReport>,
}

/// Minimizes the regularized multi-view photometric objective from `init`.
pub fn optimize<G: ShapeGenerator + Sync + ?Sized>(
    prior: &G,
    frames: &FrameSet,
    init: &ShapeState,
    z0: &[f64],
    config: &OptimConfig,
) -> Result<OptimOutcome> {
    config.validate()?;
    if init.code.len() != prior.code_dim() {
        return Err(Error::DimensionMismatch {
            expected: prior.code_dim(),
            actual: init.code.len(),
        });
    }
    if z0.len() != prior.code_dim() {
        return Err(Error::DimensionMismatch {
            expected: prior.code_dim(),
            actual: z0.len(),
        });
    }
    let k = prior.code_dim();
    let mut params = init.to_vec();
    let mut adam = Adam::new(
        params.len(),
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = Vec::with_capacity(config.iterations);
    let directions = frames.view_directions();
    for it in 0..config.iterations {
        let state = ShapeState::from_slice(&params, k)?;
        let pairs = select_pairs(&config.pairs, &directions, it, &mut rng);
        let eval = evaluate_objective(prior, frames, &state, z0, &pairs, config, it)?;
        adam.step(&mut params, &eval.gradient);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteLoss { iteration: it });
        }
        trace.push(eval.report);
    }
    Ok(OptimOutcome {
        state: ShapeState::from_slice(&params, k)?,
        trace,
    })
}

/// Writes one JSON object per line.
pub fn trace_to_jsonl(trace: &[LossReport]) -> Result<String> {
    let mut out = String::new();
    for r in trace {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}
