mod common;

use nalgebra::{Vector2, Vector3};
use photomesh::geometry::{ray_triangle_intersect, sample_triangle_points, Camera, Ray, TriangleMesh};
use photomesh::raster::{rasterize, sample_visibility, Visibility};
use photomesh::transforms::{
    apply_similarity, rodrigues, so3_exp, virtual_camera, SimilarityParams, DEFAULT_TAYLOR_ORDER,
};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn camera() -> impl Strategy<Value = Camera> {
    (vec3(1.0), 2.0..6.0f64, vec3(0.3), 30.0..300.0f64, 16usize..200).prop_filter_map(
        "degenerate eye",
        |(dir, r, target, f, size)| {
            let eye = dir.try_normalize(0.1)? * r;
            Camera::look_at(eye, target, Vector3::y(), f, size, size).ok()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_round_trip(cam in camera(), p in vec3(1.0)) {
        let (x, _) = cam.project(&p).unwrap();
        let ray = cam.unproject(&x);
        let along = (p - ray.origin).dot(&ray.direction);
        prop_assert!((ray.at(along) - p).norm() < 1e-6);
        prop_assert!(along > 0.0);
    }

    #[test]
    fn intersection_point_is_on_both(o in vec3(2.0), tri in [vec3(1.0), vec3(1.0), vec3(1.0)], w in (0.05..1.0f64, 0.05..1.0f64, 0.05..1.0f64)) {
        let s = w.0 + w.1 + w.2;
        let target = tri[0] * (w.0 / s) + tri[1] * (w.1 / s) + tri[2] * (w.2 / s);
        prop_assume!((target - o).norm() > 1e-3);
        let ray = Ray::new(o, target - o);
        if let Some((t, a)) = ray_triangle_intersect(&ray, &tri) {
            let on_tri = tri[0] * a.x + tri[1] * a.y + tri[2] * a.z;
            prop_assert!((on_tri - ray.at(t)).norm() < 1e-9);
        }
    }

    #[test]
    fn barycentric_sampling_is_affine(tri in [vec3(1.0), vec3(1.0), vec3(1.0)], a in vec3(1.0), b in vec3(1.0), c in -2.0..2.0f64) {
        let mesh = TriangleMesh::new(tri.to_vec(), vec![[0, 1, 2]]).unwrap();
        let mix = a * c + b * (1.0 - c);
        let pts = sample_triangle_points(&mesh, 0, &[a, b, mix]).unwrap();
        prop_assert!((pts[2] - (pts[0] * c + pts[1] * (1.0 - c))).norm() < 1e-9);
    }

    #[test]
    fn exponential_matches_closed_form(w in vec3(std::f64::consts::PI)) {
        prop_assume!(w.norm() <= std::f64::consts::PI);
        let e = (so3_exp(&w, DEFAULT_TAYLOR_ORDER) - rodrigues(&w)).amax();
        prop_assert!(e < 1e-12, "{}", e);
    }

    #[test]
    fn similarity_preserves_angles(s in -1.0..1.0f64, w in vec3(3.0), t in vec3(2.0), p in [vec3(1.0), vec3(1.0), vec3(1.0)]) {
        let theta = SimilarityParams { s, omega: w, t };
        let q = apply_similarity(&p, &theta);
        let (u0, v0) = (p[1] - p[0], p[2] - p[0]);
        let (u1, v1) = (q[1] - q[0], q[2] - q[0]);
        prop_assume!(u0.norm() > 1e-3 && v0.norm() > 1e-3);
        let cos0 = u0.dot(&v0) / (u0.norm() * v0.norm());
        let cos1 = u1.dot(&v1) / (u1.norm() * v1.norm());
        prop_assert!((cos0 - cos1).abs() < 1e-9);
    }

    #[test]
    fn virtual_camera_is_symmetric(dir_a in vec3(1.0), dir_b in vec3(1.0)) {
        let a = Camera::look_at(dir_a.try_normalize(0.1).unwrap_or(Vector3::x()) * 3.0, Vector3::zeros(), Vector3::y(), 50.0, 32, 32);
        let b = Camera::look_at(dir_b.try_normalize(0.1).unwrap_or(Vector3::z()) * 3.0, Vector3::zeros(), Vector3::y(), 50.0, 32, 32);
        let (Ok(a), Ok(b)) = (a, b) else { return Ok(()) };
        // Opposite rotations have no unique bisector.
        prop_assume!((a.rotation.transpose() * b.rotation).trace() > -0.9);
        let ab = virtual_camera(&a, &b).unwrap();
        let ba = virtual_camera(&b, &a).unwrap();
        prop_assert!((ab.rotation - ba.rotation).amax() < 1e-9);
        prop_assert!((ab.translation - ba.translation).amax() < 1e-9);
    }

    #[test]
    fn samples_reproject_to_their_pixels_and_are_visible_to_the_sampler(seed in 0u64..10_000, n in 1usize..60) {
        let mut rng = common::rng(seed);
        let mesh = common::random_soup(&mut rng, n);
        let cam = Camera::identity(40.0, 16.0, 16.0, 32, 32);
        let samples = sample_visibility(&mesh, &cam, std::slice::from_ref(&cam), 1e-3);
        prop_assert_eq!(samples.len(), rasterize(&mesh, &cam).coverage());
        for s in &samples {
            let (x, _) = cam.project(&s.point).unwrap();
            let center = Vector2::new(s.pixel.0 as f64 + 0.5, s.pixel.1 as f64 + 0.5);
            prop_assert!((x - center).norm() < 0.5);
            prop_assert_eq!(s.visibility[0], Visibility::Visible);
        }
    }
}
