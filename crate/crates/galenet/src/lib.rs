//! Multimodal hurricane damage-severity pipeline.
//!
//! The crate aligns three data modalities per building — image embeddings at
//! four crop scales, averaged weather features, and a hurricane-trajectory
//! closest-approach triple — and trains late-fusion and baseline classifiers
//! for four damage-severity classes. Evaluation uses balanced accuracy and
//! macro-averaged PR/ROC AUC.
//!
//! Module map:
//!
//! - [`geo`]: great-circle distance, polygon centroid/area, crop-window geometry
//! - [`featurize`]: trajectory closest-approach and weather averaging
//! - [`dataset`]: manifest/CSV/embedding ingestion, alignment, synthetic data
//! - [`nn`]: dense layers, focal loss, Adam, L-BFGS, gradient checking
//! - [`models`]: LogReg, Concat-MLP and the late-fusion network, checkpoints
//! - [`training`]: early-stopped training loop and multi-seed experiments
//! - [`metrics`]: balanced accuracy, macro ROC/PR AUC, confusion matrices
//!
//! With the default `parallel` feature, per-building featurization and
//! multi-seed experiments fan out over rayon; results are merged in input
//! order so outputs are identical to the sequential fallback.

pub mod dataset;
pub mod error;
pub mod featurize;
pub mod geo;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod par;
pub mod training;

pub use error::{Error, Result};
