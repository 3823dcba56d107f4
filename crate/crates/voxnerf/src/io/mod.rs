//! File formats: PPM images, raw float depth, ASCII PLY point clouds,
//! camera/scene/dataset JSON, checkpoints, and report/log writers.

pub mod cameras;
pub mod checkpoint;
pub mod dataset;
pub mod depth;
pub mod log;
pub mod ply;
pub mod ppm;
pub mod report;
pub mod scene;
pub mod svo;
