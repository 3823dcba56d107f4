//! Voxel-octree-guided neural radiance fields on CPU: a noisy point-cloud
//! prior builds a sparse voxel octree whose first-hit distances steer ray
//! sampling and supervise depth through a robust loss.

pub mod cli;
pub mod error;
pub mod field;
pub mod image;
pub mod io;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod morton;
pub mod raycast;
pub mod render;
pub mod rng;
pub mod sampler;
pub mod svo;
pub mod synth;
pub mod train;

pub use error::{Result, VoxError};
