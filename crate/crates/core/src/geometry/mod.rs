//! Rigid-body math, the pinhole camera, organized point clouds and meshes.
//!
//! Camera frame: +z forward, +x right, +y down. Pixel `(u, v)` has its center
//! at integer coordinates, so pixel indices and projected coordinates share
//! one convention.

mod camera;
mod cloud;
mod mesh;
mod transform;

pub use camera::CameraIntrinsics;
pub use cloud::OrganizedCloud;
pub use mesh::TriangleMesh;
pub use transform::{perturb_rotation, sample_uniform_rotation, transform_point, Pose, Rotation};

/// A point or displacement in meters.
pub type Vec3 = nalgebra::Vector3<f64>;
