//! # fuse2d
//!
//! Multirate physiological recordings (PPG at 64 Hz, EDA at 4 Hz, 3-axis ACC
//! at 32 Hz) fused into 2D image matrices, plus a from-scratch CNN that
//! classifies the images into stress / no-stress.
//!
//! ## Pipeline
//!
//! ```text
//! recording dir          ingest    load, detrend, composite ACC magnitude
//!   -> 5 s windows       fusion    1 s stride, per-channel min-max normalize
//!   -> 32x32 matrix      fusion    sample repetition, band arrangements
//!   -> 128x128 RGB PNG   colorize  gray / manual-RGB / custom scheme, x4
//!   -> train / eval      cnn       Adam, two-stage training with freezing
//!   -> report.json       metrics   precision, recall, F1, accuracy, ROC-AUC
//! ```
//!
//! Band arrangements (PEA, EAP, EPA, ... any permutation) reorder the signal
//! bands inside the matrix; training on several arrangements acts as data
//! augmentation. Everything downstream of a seed is deterministic, including
//! synthetic data generation, PNG bytes and training trajectories.

pub mod cnn;
pub mod colorize;
pub mod dataset;
mod error;
pub mod fusion;
pub mod ingest;
pub mod metrics;
pub mod synth;

pub use error::{Error, Result};
