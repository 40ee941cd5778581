mod common;

use nalgebra::Vector3;
use photomesh::eval::eta_pair;
use photomesh::geometry::{Camera, TriangleMesh};
use photomesh::image::Image;
use photomesh::optim::{evaluate_objective, optimize, trace_to_jsonl, OptimConfig, PairPolicy};
use photomesh::photometric::{photometric_loss, PairOptions};
use photomesh::prior::{generate, ShapeState};
use photomesh::scene::{make_scene, perturb_state, render, NoiseSpec, Pattern, Scene};
use photomesh::transforms::SimilarityParams;
use rand::Rng;

fn scene(seed: u64) -> Scene {
    make_scene(&common::small_spec(seed)).unwrap()
}

fn pair_total(scene: &Scene, state: &ShapeState) -> f64 {
    let f = scene.frames.len();
    let pairs: Vec<(usize, usize)> = (0..f).map(|a| (a.min((a + 1) % f), a.max((a + 1) % f))).collect();
    let cfg = OptimConfig {
        lambda_code: 0.0,
        lambda_scale: 0.0,
        ..Default::default()
    };
    evaluate_objective(&scene.prior, &scene.frames, state, &state.code, &pairs, &cfg, 0)
        .unwrap()
        .report
        .photometric
}

#[test]
fn textured_plane_is_consistent_at_ground_truth() {
    // Larger than both frustums, so no sample mixes with the background.
    let n = 16;
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            verts.push(Vector3::new(
                -2.0 + 4.0 * i as f64 / n as f64,
                -2.0 + 4.0 * j as f64 / n as f64,
                0.0,
            ));
        }
    }
    for j in 0..n {
        for i in 0..n {
            let a = j * (n + 1) + i;
            faces.push([a, a + 1, a + n + 2]);
            faces.push([a, a + n + 2, a + n + 1]);
        }
    }
    let colors = verts
        .iter()
        .map(|v: &Vector3<f64>| Vector3::new(0.5 + 0.3 * (2.0 * v.x).sin(), 0.5 + 0.3 * (1.5 * v.y).cos(), 0.5))
        .collect();
    let plane = TriangleMesh::new(verts, faces).unwrap().with_colors(colors).unwrap();
    let ca = Camera::look_at(
        Vector3::new(-0.3, 0.0, -3.0),
        Vector3::zeros(),
        Vector3::y(),
        120.0,
        96,
        96,
    )
    .unwrap();
    let cb = Camera::look_at(
        Vector3::new(0.3, 0.1, -3.0),
        Vector3::zeros(),
        Vector3::y(),
        120.0,
        96,
        96,
    )
    .unwrap();
    let bg = Image::filled(96, 96, Vector3::repeat(0.1));
    let ia = render(&plane, &ca, &bg).unwrap();
    let ib = render(&plane, &cb, &bg).unwrap();
    let at_gt = photometric_loss(&ia, &ib, &ca, &cb, &plane).unwrap();
    assert!(at_gt.loss / 3.0 < 1e-3, "{}", at_gt.loss);

    let mut moved = plane.clone();
    for v in &mut moved.vertices {
        v.z += 0.1;
    }
    let off = photometric_loss(&ia, &ib, &ca, &cb, &moved).unwrap();
    assert!(off.loss > at_gt.loss);
}

#[test]
fn identical_frames_give_zero_loss() {
    let s = scene(0);
    let (img, cam) = &s.frames.frames[0];
    let eval = photometric_loss(img, img, cam, cam, &s.gt_mesh).unwrap();
    assert_eq!(eval.loss, 0.0);
    assert!(eval.samples.len() > 100);
}

#[test]
fn ground_truth_beats_perturbed_states() {
    let s = scene(1);
    let gt = pair_total(&s, &s.gt_state);
    for seed in 0..20 {
        let noisy = perturb_state(
            &s.gt_state,
            &NoiseSpec {
                sigma: 0.12,
                code_sigma: 0.0,
                seed,
            },
        )
        .unwrap();
        assert!(pair_total(&s, &noisy) > gt, "seed {seed}");
    }
}

#[test]
fn ground_truth_is_a_local_minimum_along_random_slices() {
    let s = scene(2);
    let x0 = s.gt_state.to_vec();
    let k = s.gt_state.code.len();
    let gt = pair_total(&s, &s.gt_state);
    let mut rng = common::rng(5);
    for _ in 0..20 {
        let dir: Vec<f64> = (0..x0.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        for sign in [-1.0, 1.0] {
            let x: Vec<f64> = x0.iter().zip(&dir).map(|(a, d)| a + sign * 0.01 * d / norm).collect();
            let l = pair_total(&s, &ShapeState::from_slice(&x, k).unwrap());
            assert!(gt <= l, "{gt} > {l}");
        }
    }
}

#[test]
fn report_decomposition_holds_every_iteration() {
    let s = scene(3);
    let cfg = OptimConfig {
        iterations: 8,
        ..Default::default()
    };
    let out = optimize(&s.prior, &s.frames, &s.init_state, &s.init_state.code, &cfg).unwrap();
    assert_eq!(out.trace.len(), 8);
    for r in &out.trace {
        assert!(r.decomposition_error() <= 1e-9);
        assert_eq!(r.pairs.len(), 8);
        assert_eq!(r.samples, r.pairs.iter().map(|p| p.samples).sum::<usize>());
    }
}

#[test]
fn zero_iterations_return_init() {
    let s = scene(4);
    let cfg = OptimConfig {
        iterations: 0,
        ..Default::default()
    };
    let out = optimize(&s.prior, &s.frames, &s.init_state, &s.init_state.code, &cfg).unwrap();
    assert_eq!(out.state, s.init_state);
    assert!(out.trace.is_empty());
}

#[test]
fn all_pairs_policy_on_four_frames() {
    let mut spec = common::small_spec(5);
    spec.rig.azimuths = 4;
    let s = make_scene(&spec).unwrap();
    let cfg = OptimConfig {
        iterations: 2,
        pairs: PairPolicy::All,
        ..Default::default()
    };
    let out = optimize(&s.prior, &s.frames, &s.init_state, &s.init_state.code, &cfg).unwrap();
    assert!(out.trace.iter().all(|r| r.pairs.len() == 6));
}

#[test]
fn parallel_and_serial_traces_are_identical() {
    let s = scene(6);
    let base = OptimConfig {
        iterations: 5,
        seed: 9,
        ..Default::default()
    };
    let serial = OptimConfig {
        parallel: false,
        ..base.clone()
    };
    let a = optimize(&s.prior, &s.frames, &s.init_state, &s.init_state.code, &serial).unwrap();
    let b = optimize(&s.prior, &s.frames, &s.init_state, &s.init_state.code, &base).unwrap();
    assert_eq!(trace_to_jsonl(&a.trace).unwrap(), trace_to_jsonl(&b.trace).unwrap());
    assert_eq!(a.state, b.state);
}

#[test]
fn starting_at_ground_truth_does_not_diverge() {
    let s = scene(7);
    let out = optimize(
        &s.prior,
        &s.frames,
        &s.gt_state,
        &s.gt_state.code,
        &OptimConfig::default(),
    )
    .unwrap();
    let mesh = generate(&s.prior, &out.state).unwrap();
    let init = generate(&s.prior, &s.gt_state).unwrap();
    let (before, _) = eta_pair(&init, &s.gt_mesh, 4000, 0).unwrap();
    let (after, _) = eta_pair(&mesh, &s.gt_mesh, 4000, 0).unwrap();
    assert!(after <= before + 1e-2, "{before} -> {after}");
}

#[test]
fn perturbed_start_improves() {
    let s = scene(8);
    let out = optimize(
        &s.prior,
        &s.frames,
        &s.init_state,
        &s.init_state.code,
        &OptimConfig::default(),
    )
    .unwrap();
    let (before, _) = eta_pair(&generate(&s.prior, &s.init_state).unwrap(), &s.gt_mesh, 4000, 0).unwrap();
    let (after, _) = eta_pair(&generate(&s.prior, &out.state).unwrap(), &s.gt_mesh, 4000, 0).unwrap();
    assert!(after < before, "{before} -> {after}");
    let first = out.trace[0].total;
    assert!(out.trace[9].total < first);
}

#[test]
fn non_finite_state_is_reported() {
    let s = scene(9);
    let mut bad = s.init_state.clone();
    bad.transform = SimilarityParams {
        s: f64::NAN,
        ..bad.transform
    };
    let cfg = OptimConfig {
        iterations: 1,
        ..Default::default()
    };
    let err = optimize(&s.prior, &s.frames, &bad, &bad.code, &cfg).unwrap_err();
    assert!(
        matches!(err, photomesh::Error::NonFiniteLoss { iteration: 0 }),
        "{err:?}"
    );
}

#[test]
fn constant_texture_scene_still_renders_object() {
    let mut spec = common::small_spec(10);
    spec.texture.pattern = Pattern::Constant;
    let s = make_scene(&spec).unwrap();
    let opts = PairOptions::default();
    assert!(opts.visibility_tolerance > 0.0);
    let (img, _) = &s.frames.frames[0];
    let c = Vector3::from(spec.texture.color).map(|v| (v * 255.0).round() / 255.0);
    let hits = (0..64)
        .flat_map(|y| (0..64).map(move |x| (x, y)))
        .filter(|&(x, y)| (img.get(x, y) - c).norm() < 1e-12);
    assert!(hits.count() > 200);
}

/// Totals under random pair subsets are not comparable across iterations,
/// so this uses every pair of the 128 px, 24-view benchmark ring.
#[test]
fn loss_drops_over_first_ten_iterations_in_most_runs() {
    let cfg = OptimConfig {
        iterations: 10,
        pairs: PairPolicy::All,
        ..Default::default()
    };
    let drops = (0..10)
        .filter(|&seed| {
            let s = make_scene(&common::benchmark_spec(0.12, seed)).unwrap();
            let out = optimize(&s.prior, &s.frames, &s.init_state, &s.init_state.code, &cfg).unwrap();
            out.trace[9].total < out.trace[0].total
        })
        .count();
    assert!(drops >= 9, "{drops}/10");
}
