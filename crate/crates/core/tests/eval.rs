mod common;

use nalgebra::Vector3;
use photomesh::eval::*;
use photomesh::geometry::{Camera, TriangleMesh};
use photomesh::scene::{icosphere, make_orbit_cameras, OrbitRig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn kd_tree_matches_brute_force_exactly(seed in any::<u64>(), n in 1usize..=100, m in 1usize..=100) {
        let mut rng = common::rng(seed);
        let a = common::random_points(&mut rng, n);
        let b = common::random_points(&mut rng, m);
        prop_assert_eq!(point_set_error(&a, &b).unwrap(), common::brute_point_set_error(&a, &b));
        prop_assert_eq!(point_set_error(&a, &a).unwrap(), 0.0);
    }
}

#[test]
fn sample_counts_follow_area() {
    let mesh = TriangleMesh::new(
        vec![
            Vector3::zeros(),
            Vector3::new(2.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(10.0, 0.0, 0.0),
            Vector3::new(16.0, 0.0, 0.0),
            Vector3::new(10.0, 1.0, 0.0),
        ],
        vec![[0, 1, 2], [3, 4, 5]],
    )
    .unwrap();
    let n = 10_000;
    let pts = sample_mesh_surface(&mesh, n, 1).unwrap();
    let first = pts.iter().filter(|p| p.x < 5.0).count() as f64;
    let (mean, sd) = (0.25 * n as f64, (n as f64 * 0.25 * 0.75).sqrt());
    assert!((first - mean).abs() < 3.0 * sd, "{first}");
}

#[test]
fn unit_square_samples_are_centered() {
    let mesh = TriangleMesh::new(
        vec![
            Vector3::zeros(),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .unwrap();
    let n = 10_000;
    let pts = sample_mesh_surface(&mesh, n, 2).unwrap();
    let mean = pts.iter().sum::<Vector3<f64>>() / n as f64;
    let sd = (1.0 / 12.0 / n as f64).sqrt();
    assert!(
        (mean.x - 0.5).abs() < 3.0 * sd && (mean.y - 0.5).abs() < 3.0 * sd,
        "{mean}"
    );
}

fn ring_cameras() -> Vec<Camera> {
    make_orbit_cameras(&OrbitRig::with_fov(12, vec![20.0], 3.0, 64, 64, 60.0)).unwrap()
}

fn shifted(mesh: &TriangleMesh, d: Vector3<f64>) -> TriangleMesh {
    let mut m = mesh.clone();
    m.vertices.iter_mut().for_each(|v| *v += d);
    m
}

#[test]
fn reprojection_error_is_zero_for_identical_meshes() {
    let mesh = icosphere(2);
    for d in [1, 2, 4] {
        // Points are recovered by ray casting, so only up to rounding.
        assert!(reprojection_error(&mesh, &mesh, &ring_cameras(), d).unwrap() < 1e-9);
    }
}

#[test]
fn reprojection_error_grows_with_offset() {
    let mesh = icosphere(2);
    let cams = ring_cameras();
    let errs: Vec<f64> = [0.02, 0.05, 0.1, 0.2]
        .iter()
        .map(|&o| reprojection_error(&mesh, &shifted(&mesh, Vector3::new(o, 0.5 * o, 0.0)), &cams, 1).unwrap())
        .collect();
    assert!(errs.windows(2).all(|w| w[0] < w[1]), "{errs:?}");
}

#[test]
fn reprojection_error_needs_enough_cameras() {
    let mesh = icosphere(1);
    assert!(reprojection_error(&mesh, &mesh, &ring_cameras()[..2], 2).is_err());
    assert!(reprojection_error(&mesh, &mesh, &ring_cameras(), 0).is_err());
}

fn facing_plane(z: f64) -> TriangleMesh {
    TriangleMesh::new(
        vec![
            Vector3::new(-5.0, -5.0, z),
            Vector3::new(5.0, -5.0, z),
            Vector3::new(5.0, 5.0, z),
            Vector3::new(-5.0, 5.0, z),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .unwrap()
}

#[test]
fn depth_error_of_axial_offset() {
    let cam = Camera::identity(30.0, 16.0, 16.0, 32, 32);
    let e = depth_error(&facing_plane(3.07), &facing_plane(3.0), &[cam]).unwrap();
    assert!((e.mean - 0.07).abs() < 1e-9, "{}", e.mean);
    let same = depth_error(&facing_plane(3.0), &facing_plane(3.0), &ring_cameras()[..1]);
    assert!(same.is_err() || same.unwrap().mean == 0.0);
}

#[test]
fn depth_error_without_overlap() {
    let cam = Camera::identity(30.0, 16.0, 16.0, 32, 32);
    assert!(matches!(
        depth_error(&facing_plane(-3.0), &facing_plane(3.0), &[cam]),
        Err(photomesh::Error::NoOverlap)
    ));
}

#[test]
fn metrics_vanish_for_identical_meshes() {
    let mesh = icosphere(2);
    let m = evaluate(&mesh, &mesh, &ring_cameras(), &[1, 2, 4], 2000, 3).unwrap();
    assert_eq!(m.eta_pred_to_gt, 0.0);
    assert_eq!(m.eta_gt_to_pred, 0.0);
    assert!(m.reproj.values().all(|v| *v < 1e-9));
    assert_eq!(m.depth_error, 0.0);
    let json = serde_json::to_string(&m).unwrap();
    assert!(json.contains("\"reproj\":{\"1\":"), "{json}");
    assert_eq!(serde_json::from_str::<Metrics>(&json).unwrap(), m);
}
