//! Explicit geometry: meshes, point clouds, the exact nearest-point oracle,
//! and deterministic samplers.
//!
//! Everything here runs in f64. Query operations (nearest point, k-NN) are
//! read-only after construction and safe to call from multiple threads.

pub mod bvh;
pub mod cloud;
pub mod fixtures;
pub mod mesh;
pub mod sample;
pub mod tri;
mod vec3;

pub use bvh::{nearest_point_on_mesh, Bvh};
pub use cloud::{nearest_point_on_cloud, PointCloud, PointIndex};
pub use mesh::{normalize_to_unit_cube, DisplacementSample, TriangleMesh, UnitCubeTransform};
pub use sample::{sample_queries, sample_surface, PADDED_HALF};
pub use tri::closest_point_on_triangle;
pub use vec3::Vec3;
