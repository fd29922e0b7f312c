//! Wake-vortex detection in range-height LiDAR scans by point-cloud
//! segmentation followed by clustering.

pub mod cli;
pub mod cluster;
pub mod dataio;
pub mod error;
pub mod evalx;
pub mod explain;
pub mod geometry;
pub mod graph;
pub mod pipeline;
pub mod render;
pub mod rng;
pub mod scalar;
pub mod segnet;
pub mod synthgen;

pub use error::{Error, Result};
