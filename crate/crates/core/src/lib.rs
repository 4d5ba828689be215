//! Surface reconstruction from sparse point clouds via learned vector
//! displacement fields.
//!
//! The central object is a [`model::VectorFieldModel`]: a network that maps a
//! 3D query point to the displacement vector from the query to its nearest
//! point on the target surface. Distance and direction are read directly off
//! the predicted vector, so inference never differentiates the network. A
//! multi-head codebook quantizes query embeddings and is updated by
//! exponential moving averages, outside the gradient path.
//!
//! Modules:
//!
//! - [`geom`]: triangle meshes, point clouds, the exact nearest-point oracle
//!   used to label training data, and deterministic samplers.
//! - [`model`]: the learnable field (encoder, query embedding, displacement
//!   head) with hand-derived backward passes, plus a scalar-distance baseline
//!   whose directions come from finite differences.
//! - [`codebook`]: multi-head vector quantization with EMA code updates.
//! - [`train`]: the displacement + commitment objective, Adam, and the
//!   training loop.
//! - [`extract`]: lattice evaluation, pseudo-sign assignment, and marching
//!   cubes for open and closed surfaces.
//! - [`metrics`]: Chamfer distance, exact Earth Mover distance, F-score.
//! - [`io`]: OBJ/PLY meshes, field dumps, checkpoints.

pub mod codebook;
pub mod error;
pub mod extract;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numeric;
#[cfg(feature = "testsupport")]
pub mod testsupport;
pub mod train;

pub use codebook::{MultiHeadCodebook, QuantizationResult};
pub use error::{NvfError, Result};
pub use extract::{ExtractParams, LatticeField, PseudoSignGrid};
pub use geom::{Bvh, DisplacementSample, PointCloud, TriangleMesh, Vec3};
pub use metrics::ReconReport;
pub use model::{FeaturedCloud, ModelConfig, OpCounters, VectorFieldModel};
pub use numeric::Real;
pub use train::{TrainConfig, TrainRecord};
