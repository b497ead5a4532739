//! Moving-object detection and tracking for image sequences taken by a
//! moving camera.
//!
//! Each frame is filtered together with its predecessors by a bank of
//! spatio-temporal Gabor energy filters. The energies are fused into a
//! single map whose connected regions (blobs) are grouped into objects by
//! cutting long edges of their minimum spanning tree. Objects are matched
//! to tracks by a gated histogram cost and smoothed with a constant-velocity
//! Kalman filter that also carries tracks through short occlusions.
//!
//! Numeric stages are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision.

pub mod blob_extract;
pub mod blob_merge;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod gabor_bank;
pub mod grid;
pub mod kalman;
pub mod pipeline;
pub mod rect;
pub mod scalar;
pub mod sequence_io;
pub mod synth;
pub mod tracker;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use grid::Grid;
pub use rect::Rect;
pub use scalar::Scalar;

pub type Pipeline64 = pipeline::Pipeline<f64>;
pub type Pipeline32 = pipeline::Pipeline<f32>;
pub type GaborBank64 = gabor_bank::GaborBank<f64>;
pub type GaborBank32 = gabor_bank::GaborBank<f32>;
pub type Tracker64 = tracker::Tracker<f64>;
pub type Tracker32 = tracker::Tracker<f32>;
pub type KalmanState64 = kalman::KalmanState<f64>;
pub type KalmanState32 = kalman::KalmanState<f32>;
pub type ObjectFeature64 = blob_merge::ObjectFeature<f64>;
pub type FrameTracks64 = tracker::FrameTracks<f64>;
