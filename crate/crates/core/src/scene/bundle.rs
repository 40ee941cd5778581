//! Scene specification and the on-disk bundle layout:
//! `frame_%03d.png`, `cameras.json`, `gt_mesh.obj`, `gt_state.json`,
//! `init_state.json`, `prior.json` and `spec.json`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    family_prior, icosphere, make_sequence, perturb_state, NoiseSpec, OrbitRig, Panorama, ShapeParams, TextureSpec,
};
use crate::error::{Error, Result};
use crate::geometry::{load_cameras, save_cameras, TriangleMesh};
use crate::image::Image;
use crate::optim::FrameSet;
use crate::prior::{LinearShapePrior, ShapeState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeSpec {
    /// Members used to fit the prior.
    pub family_size: usize,
    pub code_dim: usize,
    pub subdivisions: usize,
    pub family_seed: u64,
    /// Seed of the ground-truth member, drawn from the same distribution as
    /// the family but not part of it. Its projection onto the prior is used.
    pub member_seed: u64,
}

impl Default for ShapeSpec {
    fn default() -> Self {
        ShapeSpec {
            family_size: 48,
            code_dim: 16,
            subdivisions: 3,
            family_seed: 0,
            member_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PanoramaSource {
    Procedural { width: usize, seed: u64 },
    File(PathBuf),
}

impl Default for PanoramaSource {
    fn default() -> Self {
        PanoramaSource::Procedural { width: 1024, seed: 0 }
    }
}

impl PanoramaSource {
    pub fn load(&self) -> Result<Panorama> {
        match self {
            PanoramaSource::Procedural { width, seed } => Panorama::procedural(*width, *seed),
            PanoramaSource::File(p) => Panorama::load_png(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub rig: OrbitRig,
    pub shape: ShapeSpec,
    pub texture: TextureSpec,
    pub panorama: PanoramaSource,
    pub noise: NoiseSpec,
}

/// Everything generated for one synthetic experiment.
#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub prior: LinearShapePrior,
    pub frames: FrameSet,
    pub gt_mesh: TriangleMesh,
    pub gt_state: ShapeState,
    pub init_state: ShapeState,
}

/// Fits the prior, renders the ground-truth member and perturbs its state.
pub fn make_scene(spec: &SceneSpec) -> Result<Scene> {
    let s = &spec.shape;
    let (prior, _) = family_prior(s.family_size, s.code_dim, s.subdivisions, s.family_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.member_seed);
    let member = ShapeParams::random(&mut rng).apply(&icosphere(s.subdivisions));
    let code = prior.encode(&member)?;
    let pano = spec.panorama.load()?;
    let seq = make_sequence(&prior, &code, &spec.rig, &pano, &spec.texture)?;
    let init_state = perturb_state(&seq.gt_state, &spec.noise)?;
    Ok(Scene {
        spec: spec.clone(),
        prior,
        frames: seq.frames,
        gt_mesh: seq.gt_mesh,
        gt_state: seq.gt_state,
        init_state,
    })
}

pub fn frame_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("frame_{i:03}.png"))
}

pub fn write_scene_bundle(dir: impl AsRef<Path>, scene: &Scene) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (i, (img, _)) in scene.frames.frames.iter().enumerate() {
        img.save_png(frame_path(dir, i))?;
    }
    save_cameras(dir.join("cameras.json"), &scene.frames.cameras())?;
    scene.gt_mesh.save_obj(dir.join("gt_mesh.obj"))?;
    scene.gt_state.save_json(dir.join("gt_state.json"))?;
    scene.init_state.save_json(dir.join("init_state.json"))?;
    scene.prior.save_json(dir.join("prior.json"))?;
    fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&scene.spec)? + "\n")?;
    Ok(())
}

/// A bundle read back from disk. Only frames and cameras are required; the
/// remaining files are loaded when present.
#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub frames: FrameSet,
    pub gt_mesh: Option<TriangleMesh>,
    pub gt_state: Option<ShapeState>,
    pub init_state: Option<ShapeState>,
    pub spec: Option<SceneSpec>,
}

pub fn load_scene_bundle(dir: impl AsRef<Path>) -> Result<SceneBundle> {
    let dir = dir.as_ref();
    let cams_path = dir.join("cameras.json");
    if !cams_path.is_file() {
        return Err(Error::InvalidConfig(format!("missing {}", cams_path.display())));
    }
    let cameras = load_cameras(&cams_path)?;
    let frames = cameras
        .into_iter()
        .enumerate()
        .map(|(i, cam)| Ok((Image::load_png(frame_path(dir, i))?, cam)))
        .collect::<Result<Vec<_>>>()?;
    let optional = |name: &str| Some(dir.join(name)).filter(|p| p.is_file());
    Ok(SceneBundle {
        frames: FrameSet::new(frames)?,
        gt_mesh: optional("gt_mesh.obj").map(TriangleMesh::load_obj).transpose()?,
        gt_state: optional("gt_state.json").map(ShapeState::load_json).transpose()?,
        init_state: optional("init_state.json").map(ShapeState::load_json).transpose()?,
        spec: optional("spec.json")
            .map(|p| -> Result<SceneSpec> { Ok(serde_json::from_str(&fs::read_to_string(p)?)?) })
            .transpose()?,
    })
}
