//! Pooling heads for speech emotion recognition over frozen encoder
//! representations.
//!
//! A head projects each frame of a `T x d_enc` representation matrix to
//! `d_model`, pools the frames into one vector (mean, multi-head attentive or
//! multi-head QKV) and classifies it. Everything trainable lives here, along
//! with a minimal reverse-mode autodiff engine, the feature file format,
//! training and cross-validation, and metrics.

pub mod diffcore;
mod error;
pub mod featurestore;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod training;

pub use error::{Error, Result};
