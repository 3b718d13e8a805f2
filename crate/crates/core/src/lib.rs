//! Point-guided annotation toolkit.
//!
//! Turns per-frame trajectory points into bounding boxes with patch intensity
//! convergence ([`pic`]), compares them against simple reference extractors
//! ([`baselines`], [`metrics`]), and assembles detection and segmentation
//! datasets ([`dataset`], [`mask`]). [`synth`] renders scenes with exact
//! ground truth for testing.

pub mod baselines;
pub mod bbox;
pub mod dataset;
pub mod error;
pub mod imaging;
pub mod mask;
pub mod metrics;
pub mod pic;
pub mod synth;

pub use bbox::{BBox, BoxSource};
pub use error::{Error, Result};
pub use imaging::{GrayFrame, PixelRect};
pub use pic::{pic_box, Halt, IntensityTrace, PicConfig, TrajectoryPoint};
