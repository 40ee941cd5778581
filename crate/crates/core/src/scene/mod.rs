//! Synthetic experiment inputs: shape family, orbit rigs, panorama
//! backgrounds, rendered sequences and perturbed initializations.

mod bundle;
mod family;
mod panorama;
mod rig;
mod texture;

pub use bundle::{
    load_scene_bundle, make_scene, write_scene_bundle, PanoramaSource, Scene, SceneBundle, SceneSpec, ShapeSpec,
};
pub use family::{family_prior, icosphere, make_family, Bump, ShapeParams};
pub use panorama::{crop_panorama, direction_pixel, pixel_direction, Panorama};
pub use rig::{focal_for_fov, make_orbit_cameras, OrbitRig};
pub use texture::{Pattern, TextureSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Camera, TriangleMesh};
use crate::image::Image;
use crate::optim::FrameSet;
use crate::prior::{generate, ShapeGenerator, ShapeState};
use crate::raster::rasterize;
use crate::transforms::SimilarityParams;

/// Renders vertex colors with perspective-correct interpolation over
/// `background`. No coverage mask is produced.
pub fn render(mesh: &TriangleMesh, camera: &Camera, background: &Image) -> Result<Image> {
    let colors = mesh
        .colors
        .as_ref()
        .ok_or_else(|| Error::InvalidMesh("render needs vertex colors".into()))?;
    if background.width() != camera.width || background.height() != camera.height {
        return Err(Error::InvalidConfig(
            "background size differs from the camera image".into(),
        ));
    }
    let maps = rasterize(mesh, camera);
    let mut out = background.clone();
    for (x, y, f) in maps.covered() {
        let a = maps.bary[maps.index(x, y)];
        let [i, j, k] = mesh.faces[f];
        out.set(x, y, colors[i] * a.x + colors[j] * a.y + colors[k] * a.z);
    }
    Ok(out)
}

/// Ground truth and rendered frames for one synthetic sequence.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub frames: FrameSet,
    pub gt_mesh: TriangleMesh,
    pub gt_state: ShapeState,
}

/// Decodes `code` at the identity transform, colors it in its canonical frame
/// and renders every rig view over a panorama crop at the rig's field of view.
/// Frames are quantized to 8 bits so they survive a PNG round trip unchanged.
pub fn make_sequence<G: ShapeGenerator + ?Sized>(
    prior: &G,
    code: &[f64],
    rig: &OrbitRig,
    pano: &Panorama,
    texture: &TextureSpec,
) -> Result<Sequence> {
    let gt_state = ShapeState::new(code.to_vec(), SimilarityParams::identity());
    let mesh = generate(prior, &gt_state)?;
    let colors = texture.vertex_colors(&mesh.vertices)?;
    let gt_mesh = mesh.with_colors(colors)?;
    let cameras = make_orbit_cameras(rig)?;
    let fov = rig.fov_deg();
    let frames = cameras
        .par_iter()
        .map(|cam| {
            let bg = crop_panorama(pano, cam, fov)?;
            Ok((render(&gt_mesh, cam, &bg)?.quantized(), cam.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sequence {
        frames: FrameSet::new(frames)?,
        gt_mesh,
        gt_state,
    })
}

/// Gaussian perturbation of an initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation added to each of the seven transform parameters.
    pub sigma: f64,
    /// Standard deviation added to each code entry.
    pub code_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            sigma: 0.12,
            code_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Adds seeded noise to `[s, ω, t]` (in that order), then to the code.
pub fn perturb_state(state: &ShapeState, noise: &NoiseSpec) -> Result<ShapeState> {
    if !(noise.sigma >= 0.0 && noise.code_sigma >= 0.0) || !noise.sigma.is_finite() || !noise.code_sigma.is_finite() {
        return Err(Error::InvalidConfig(
            "noise standard deviations must be finite and non-negative".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut out = state.clone();
    if noise.sigma > 0.0 {
        let n = Normal::new(0.0, noise.sigma).expect("valid sigma");
        let mut theta = out.transform.to_array();
        for x in theta.iter_mut() {
            *x += n.sample(&mut rng);
        }
        out.transform = SimilarityParams::from_slice(&theta)?;
    }
    if noise.code_sigma > 0.0 {
        let n = Normal::new(0.0, noise.code_sigma).expect("valid sigma");
        for z in out.code.iter_mut() {
            *z += n.sample(&mut rng);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector3;

    use super::*;

    #[test]
    fn empty_mesh_renders_background() {
        let cam = Camera::identity(10.0, 4.0, 4.0, 8, 8);
        let bg = Image::from_fn(8, 8, |x, y| Vector3::new(x as f64 / 8.0, y as f64 / 8.0, 0.5));
        let mesh = TriangleMesh::default().with_colors(vec![]).unwrap();
        assert_eq!(render(&mesh, &cam, &bg).unwrap(), bg);
    }

    #[test]
    fn full_screen_constant_triangle() {
        let cam = Camera::identity(10.0, 4.0, 4.0, 8, 8);
        let mesh = TriangleMesh::new(
            vec![
                Vector3::new(-10.0, -10.0, 1.0),
                Vector3::new(10.0, -10.0, 1.0),
                Vector3::new(0.0, 10.0, 1.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
        .with_colors(vec![Vector3::new(0.3, 0.6, 0.9); 3])
        .unwrap();
        let out = render(&mesh, &cam, &Image::new(8, 8)).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                assert!((out.get(x, y) - Vector3::new(0.3, 0.6, 0.9)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn render_requires_colors() {
        let cam = Camera::identity(10.0, 4.0, 4.0, 8, 8);
        assert!(render(&TriangleMesh::default(), &cam, &Image::new(8, 8)).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let s = ShapeState::new(vec![0.3, -0.2], SimilarityParams::identity());
        let p = perturb_state(
            &s,
            &NoiseSpec {
                sigma: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(p, s);
    }

    #[test]
    fn perturbation_is_seeded_and_leaves_code() {
        let s = ShapeState::zeros(3);
        let spec = NoiseSpec {
            sigma: 0.12,
            code_sigma: 0.0,
            seed: 7,
        };
        let a = perturb_state(&s, &spec).unwrap();
        assert_eq!(a, perturb_state(&s, &spec).unwrap());
        assert_eq!(a.code, s.code);
        assert!(a.transform.to_array().iter().all(|x| *x != 0.0));
        let b = perturb_state(&s, &NoiseSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a, b);
        assert!(perturb_state(&s, &NoiseSpec { sigma: -1.0, ..spec }).is_err());
    }
}
