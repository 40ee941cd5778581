//! Meshes, cameras, projection and ray casting.

pub mod camera;
pub mod mesh;
pub mod ray;

pub use camera::{load_cameras, save_cameras, Camera, CameraRecord, EPS_DEPTH};
pub use mesh::{TriangleMesh, EPS_AREA};
pub use ray::{
    barycentric_jacobian, ray_triangle_intersect, raycast_point_jacobian, sample_triangle_points, BarycentricSample,
    Ray,
};
