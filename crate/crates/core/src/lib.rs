//! Multi-view photometric alignment of a deformable mesh.
//!
//! A [`prior::ShapeGenerator`] decodes a latent code into vertices, a
//! similarity transform places them in the world, and [`optim::optimize`]
//! adjusts both so that every pair of input frames agrees on the colors of
//! mesh points seen from a camera halfway between them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod geometry;
pub mod gradcheck;
pub mod image;
pub mod optim;
pub mod photometric;
pub mod prior;
pub mod raster;
pub mod scene;
pub mod transforms;

pub use error::{Error, Result};
pub use geometry::{Camera, TriangleMesh};
pub use image::Image;
pub use prior::{LinearShapePrior, ShapeGenerator, ShapeState};
