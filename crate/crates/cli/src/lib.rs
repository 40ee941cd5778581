//! Command-line driver. Settings resolve as defaults, then `--config` JSON,
//! then explicit flags.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod sweep;

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use photomesh::optim::{PairPolicy, DEFAULT_MAX_PAIR_ANGLE};
use photomesh::scene::{PanoramaSource, Pattern};
use photomesh::{Error, Result};

pub use config::{EvalConfig, RunConfig, SweepConfig};

#[derive(Debug, Parser)]
#[command(
    name = "photomesh",
    version,
    about = "Multi-view photometric mesh fitting with a learned shape prior"
)]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for the global pool.
    #[arg(long, global = true, env = "PHOTOMESH_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic scene bundle.
    MakeScene(MakeSceneArgs),
    /// Fit a linear shape prior to a synthetic family or a directory of OBJ meshes.
    FitPrior(FitPriorArgs),
    /// Optimize code and pose against a scene bundle.
    Optimize(OptimizeArgs),
    /// Compare a predicted mesh with the ground truth.
    Evaluate(EvaluateArgs),
    /// Sweep initialization noise levels and seeds.
    NoiseSweep(SweepArgs),
    /// Compare analytic derivatives with finite differences.
    CheckGradients(GradArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TextureArg {
    Constant,
    Checker,
    Smooth,
}

impl From<TextureArg> for Pattern {
    fn from(t: TextureArg) -> Self {
        match t {
            TextureArg::Constant => Pattern::Constant,
            TextureArg::Checker => Pattern::Checker,
            TextureArg::Smooth => Pattern::Smooth,
        }
    }
}

/// `all` or a pair count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairsArg(pub PairPolicy);

impl FromStr for PairsArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(PairsArg(PairPolicy::All));
        }
        match s.parse::<usize>() {
            Ok(count) if count > 0 => Ok(PairsArg(PairPolicy::Random {
                count,
                max_angle: Some(DEFAULT_MAX_PAIR_ANGLE),
            })),
            _ => Err(format!("expected `all` or a positive count, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SceneArgs {
    #[arg(long)]
    pub azimuths: Option<usize>,
    /// Comma-separated elevations in degrees.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub elevations: Option<Vec<f64>>,
    /// Square image side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    /// Horizontal field of view in degrees.
    #[arg(long)]
    pub fov: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long, value_enum)]
    pub texture: Option<TextureArg>,
    #[arg(long)]
    pub family_size: Option<usize>,
    #[arg(long)]
    pub code_dim: Option<usize>,
    #[arg(long)]
    pub subdivisions: Option<usize>,
    /// Equirectangular background PNG; procedural when absent.
    #[arg(long)]
    pub panorama: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OptimArgs {
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda_code: Option<f64>,
    #[arg(long)]
    pub lambda_scale: Option<f64>,
    /// `all` or the number of pairs per iteration.
    #[arg(long)]
    pub pairs: Option<PairsArg>,
    /// Optimize the transform only.
    #[arg(long)]
    pub fix_code: bool,
    /// Evaluate pairs on a single thread.
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    /// Surface samples per mesh.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Comma-separated frame distances for the reprojection error.
    #[arg(long, value_delimiter = ',')]
    pub distances: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct MakeSceneArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Transform noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Shifts the shape, texture, background and noise seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output bundle directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FitPriorArgs {
    /// Directory of OBJ meshes sharing one topology; synthetic family otherwise.
    #[arg(long)]
    pub meshes: Option<PathBuf>,
    #[arg(long)]
    pub family_size: Option<usize>,
    #[arg(long)]
    pub code_dim: Option<usize>,
    #[arg(long)]
    pub subdivisions: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output prior JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Predicted mesh OBJ.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth OBJ; defaults to `<scene>/gt_mesh.obj`.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Metrics JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    /// Runs per noise level.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub first_seed: Option<u64>,
    /// Concurrent runs.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory for `runs.csv` and `summary.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GradArgs {
    #[arg(long, default_value_t = 1000)]
    pub cases: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Results JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl SceneArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let rig = &mut cfg.scene.rig;
        let fov = self.fov.unwrap_or_else(|| rig.fov_deg());
        set(&mut rig.azimuths, self.azimuths);
        set(&mut rig.elevations, self.elevations.clone());
        set(&mut rig.radius, self.radius);
        if let Some(n) = self.size {
            rig.width = n;
            rig.height = n;
        }
        if self.size.is_some() || self.fov.is_some() {
            rig.focal = photomesh::scene::focal_for_fov(rig.width, fov);
        }
        set(&mut cfg.scene.texture.pattern, self.texture.map(Into::into));
        let shape = &mut cfg.scene.shape;
        set(&mut shape.family_size, self.family_size);
        set(&mut shape.code_dim, self.code_dim);
        set(&mut shape.subdivisions, self.subdivisions);
        if let Some(p) = &self.panorama {
            cfg.scene.panorama = PanoramaSource::File(p.clone());
        }
    }
}

impl OptimArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let o = &mut cfg.optim;
        set(&mut o.iterations, self.iters);
        set(&mut o.learning_rate, self.lr);
        set(&mut o.lambda_code, self.lambda_code);
        set(&mut o.lambda_scale, self.lambda_scale);
        set(&mut o.pairs, self.pairs.map(|p| p.0));
        o.fix_code |= self.fix_code;
        o.parallel &= !self.serial;
    }
}

impl EvalArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.eval.samples, self.samples);
        set(&mut cfg.eval.distances, self.distances.clone());
    }
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) | Error::Parse(_) | Error::Json(_) => 2,
        Error::NonFiniteLoss { .. } => 3,
        Error::Io(_) | Error::Image(_) => 4,
        _ => 1,
    }
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.threads, cli.threads.map(Some));
    Ok(cfg)
}

/// Builds the configuration for `cli` and runs its command.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = base_config(&cli)?;
    match &cli.command {
        Command::MakeScene(a) => {
            a.scene.apply(&mut cfg);
            set(&mut cfg.scene.noise.sigma, a.sigma);
            if let Some(seed) = a.seed {
                let sigma = cfg.scene.noise.sigma;
                cfg.scene = sweep::scene_for(&cfg.scene, sigma, seed);
            }
            set(&mut cfg.out, a.out.clone().map(Some));
        }
        Command::FitPrior(a) => {
            let shape = &mut cfg.scene.shape;
            set(&mut shape.family_size, a.family_size);
            set(&mut shape.code_dim, a.code_dim);
            set(&mut shape.subdivisions, a.subdivisions);
            set(&mut shape.family_seed, a.seed);
            set(&mut cfg.out, a.out.clone().map(Some));
        }
        Command::Optimize(a) => {
            set(&mut cfg.scene_dir, a.scene.clone().map(Some));
            set(&mut cfg.prior, a.prior.clone().map(Some));
            set(&mut cfg.init, a.init.clone().map(Some));
            a.optim.apply(&mut cfg);
            set(&mut cfg.optim.seed, a.seed);
            set(&mut cfg.out, a.out.clone().map(Some));
        }
        Command::Evaluate(a) => {
            set(&mut cfg.scene_dir, a.scene.clone().map(Some));
            a.eval.apply(&mut cfg);
            set(&mut cfg.eval.seed, a.seed);
            set(&mut cfg.out, a.out.clone().map(Some));
        }
        Command::NoiseSweep(a) => {
            a.scene.apply(&mut cfg);
            a.optim.apply(&mut cfg);
            a.eval.apply(&mut cfg);
            set(&mut cfg.sweep.sigmas, a.sigmas.clone());
            set(&mut cfg.sweep.seeds, a.seeds);
            set(&mut cfg.sweep.first_seed, a.first_seed);
            set(&mut cfg.sweep.workers, a.workers);
            set(&mut cfg.out, a.out.clone().map(Some));
        }
        Command::CheckGradients(_) => {}
    }
    cfg.validate()?;
    if let Some(n) = cfg.threads {
        // A pool that already exists (tests, repeated calls) is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::MakeScene(_) => commands::make_scene(&cfg),
        Command::FitPrior(a) => commands::fit_prior(&cfg, a.meshes.as_deref()),
        Command::Optimize(_) => commands::optimize(&cfg),
        Command::Evaluate(a) => commands::evaluate(&cfg, &a.pred, a.gt.as_deref()),
        Command::NoiseSweep(_) => commands::noise_sweep(&cfg),
        Command::CheckGradients(a) => commands::check_gradients(a.cases, a.seed, a.out.as_deref()),
    }
}
