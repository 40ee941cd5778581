//! Run configuration: defaults, then an optional JSON file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use photomesh::optim::OptimConfig;
use photomesh::scene::SceneSpec;
use photomesh::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Surface samples per mesh for η.
    pub samples: usize,
    /// Frame distances for the reprojection error.
    pub distances: Vec<usize>,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            samples: photomesh::eval::DEFAULT_SAMPLE_COUNT,
            distances: vec![1, 2, 4],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sigmas: Vec<f64>,
    /// Runs per noise level; run `i` uses seed `first_seed + i`.
    pub seeds: usize,
    pub first_seed: u64,
    /// Concurrent runs; 0 uses the global pool size.
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sigmas: vec![0.03, 0.06, 0.12],
            seeds: 10,
            first_seed: 0,
            workers: 0,
        }
    }
}

/// Everything any subcommand reads. Each command uses the sections it needs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneSpec,
    pub optim: OptimConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    /// Scene bundle directory.
    pub scene_dir: Option<PathBuf>,
    /// Prior JSON; defaults to `<scene_dir>/prior.json`.
    pub prior: Option<PathBuf>,
    /// Initial state; defaults to `<scene_dir>/init_state.json`.
    pub init: Option<PathBuf>,
    /// Output file or directory, depending on the command.
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.optim.validate()?;
        self.scene.rig.validate()?;
        self.scene.texture.validate()?;
        if self.eval.samples == 0 || self.eval.distances.contains(&0) {
            return Err(Error::InvalidConfig(
                "eval samples and distances must be positive".into(),
            ));
        }
        if self.sweep.sigmas.iter().any(|s| !(*s >= 0.0)) || self.sweep.seeds == 0 {
            return Err(Error::InvalidConfig(
                "sweep needs non-negative sigmas and at least one seed".into(),
            ));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn scene_dir(&self) -> Result<&Path> {
        self.scene_dir
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("no scene directory given (--scene)".into()))
    }

    pub fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("no output path given (--out)".into()))
    }

    pub fn prior_path(&self) -> Result<PathBuf> {
        match &self.prior {
            Some(p) => Ok(p.clone()),
            None => Ok(self.scene_dir()?.join("prior.json")),
        }
    }

    pub fn init_path(&self) -> Result<PathBuf> {
        match &self.init {
            Some(p) => Ok(p.clone()),
            None => Ok(self.scene_dir()?.join("init_state.json")),
        }
    }
}
