//! Face-mask classification built around a boundary-dependent face cut.
//!
//! The pipeline selects 27 facial-landmark boundary points (jaw, brows and
//! the nasion), rasterizes the enclosed polygon, cuts the face region out of
//! each image, trains a two-class classifier on the cut dataset and
//! evaluates it with confusion-matrix metrics and Grad-CAM visualizations.
//!
//! Modules follow the pipeline stages:
//!
//! * [`landmarks`] — 68-point landmark providers (pretrained predictor or
//!   deterministic sidecar annotations) behind one contract;
//! * [`facecut`] — boundary selection, even–odd rasterization and cutting;
//! * [`dataset`] — manifests, scanning, stratified 60/20/20 splits and batch
//!   preprocessing;
//! * [`classifier`] — backbone + GAP + dense softmax head, training and
//!   prediction;
//! * [`metrics`] — confusion matrix, per-class accuracy, ACSA, PPV and the
//!   report document;
//! * [`explain`] — Grad-CAM heatmaps and overlays;
//! * [`synthetic`] — deterministic benchmark fixtures.

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod explain;
pub mod facecut;
pub mod imgproc;
pub mod landmarks;
pub mod metrics;
pub mod nn;
pub mod synthetic;

pub use error::{Error, Result};
