mod common;

use nalgebra::Vector3;
use photomesh::geometry::Camera;
use photomesh::raster::{rasterize, sample_visibility, Visibility};
use photomesh::scene::icosphere;
use proptest::prelude::*;

#[test]
fn random_soups_match_ray_casting() {
    let cam = Camera::identity(60.0, 32.0, 32.0, 64, 64);
    let mut rng = common::rng(11);
    for n in [1, 10, 50, 120, 200] {
        let mesh = common::random_soup(&mut rng, n);
        let (agree, total) = common::raster_agreement(&mesh, &cam);
        assert!(agree as f64 >= 0.99 * total as f64, "{n} faces: {agree}/{total}");
    }
}

#[test]
fn closed_sphere_matches_ray_casting() {
    let mesh = icosphere(2);
    let cam = Camera::look_at(
        Vector3::new(0.3, 0.4, -3.0),
        Vector3::zeros(),
        Vector3::y(),
        70.0,
        64,
        64,
    )
    .unwrap();
    let (agree, total) = common::raster_agreement(&mesh, &cam);
    assert_eq!(agree, total);
}

#[test]
fn sphere_samples_visible_from_sampler_itself() {
    let mesh = icosphere(2);
    let cam = Camera::look_at(
        Vector3::new(0.0, 0.0, -3.0),
        Vector3::zeros(),
        Vector3::y(),
        70.0,
        64,
        64,
    )
    .unwrap();
    let samples = sample_visibility(&mesh, &cam, std::slice::from_ref(&cam), 1e-3);
    assert_eq!(samples.len(), rasterize(&mesh, &cam).coverage());
    assert!(samples.iter().all(|s| s.visibility[0] == Visibility::Visible));
}

#[test]
fn far_side_is_occluded_from_opposite_camera() {
    let mesh = icosphere(2);
    let front = Camera::look_at(
        Vector3::new(0.0, 0.0, -3.0),
        Vector3::zeros(),
        Vector3::y(),
        70.0,
        64,
        64,
    )
    .unwrap();
    let back = Camera::look_at(
        Vector3::new(0.0, 0.0, 3.0),
        Vector3::zeros(),
        Vector3::y(),
        70.0,
        64,
        64,
    )
    .unwrap();
    let samples = sample_visibility(&mesh, &front, &[back], 1e-3);
    let deep = samples.iter().filter(|s| s.point.z < -0.5);
    for s in deep {
        assert_eq!(s.visibility[0], Visibility::Occluded);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn depth_never_exceeds_oracle(seed in 0u64..1000, n in 1usize..40) {
        let mut rng = common::rng(seed);
        let mesh = common::random_soup(&mut rng, n);
        let cam = Camera::identity(40.0, 16.0, 16.0, 32, 32);
        let maps = rasterize(&mesh, &cam);
        let oracle = common::raycast_maps(&mesh, &cam);
        for (i, o) in oracle.iter().enumerate() {
            // Anything drawn lies on some triangle, so it is never nearer
            // than the oracle's nearest hit by more than rounding.
            if let (Some((_, d)), true) = (o, maps.face[i].is_some()) {
                prop_assert!(maps.depth[i] >= d - 1e-9 * d);
            }
        }
    }
}
