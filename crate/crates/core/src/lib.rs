//! Ordinal MOS prediction from precomputed audio and text embeddings.
//!
//! The crate covers the whole desk-scale pipeline: embedding and manifest
//! formats, system-stratified splitting, a dual-branch network trained with
//! Gaussian-softened ordinal targets (plus CORAL and decoupled variants),
//! system-level rank metrics and a Ridge stacking ensemble.

pub mod ablation;
pub mod dataio;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod labels;
pub mod metrics;
pub mod network;
pub mod numerics;
pub mod predictions;
pub mod training;

pub use error::{Error, Result};
