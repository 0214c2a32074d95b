//! UAV trajectory estimation from a microphone array, supervised by an
//! unsupervised LiDAR teacher.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`teacher`]: LiDAR scans to pseudo-label trajectories;
//! - [`audio`]: 4-channel waveforms to stacked log-mel images;
//! - [`net`]: the dual-branch convolutional regressor and its training loop;
//! - [`gp`]: Gaussian Process smoothing of predicted tracks;
//! - [`eval`]: trajectory error metrics;
//! - [`sim`]: a deterministic scene simulator producing all of the above
//!   inputs with known ground truth.

pub mod audio;
pub mod config;
pub mod error;
pub mod eval;
pub mod gp;
pub mod io;
pub mod net;
pub mod sim;
pub mod teacher;
pub mod types;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use types::{ScanCloud, Sensor, TimedPoint3, Trajectory, Vec3};
