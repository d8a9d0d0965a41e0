//! Continuous-time LiDAR-only odometry with adaptive control-node intervals.
//!
//! The trajectory is a chain of SE(3) control nodes joined by geodesic
//! segments; every point is registered with the pose interpolated at its own
//! timestamp. The interval between nodes shrinks when consecutive scans show
//! aggressive rotation and grows, by merging segments, when a segment does
//! not constrain every direction.

pub mod cli;
pub mod config;
pub mod degeneracy;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod map;
pub mod optimizer;
pub mod pca;
pub mod pipeline;
pub mod scan;
pub mod se3;
pub mod sim;

pub use error::{Error, Result};
