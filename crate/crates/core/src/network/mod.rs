//! The dual-branch MI/TA model: temporal encoding, pooling, cross-attention
//! fusion and classification or cumulative heads.

mod config;
pub mod layers;
mod model;

pub use crate::numerics::ParamStore;
pub use config::{ModelConfig, Pooling, Temporal, Variant};
pub use model::{DualBranchModel, HeadKind, HeadOutput, HeadVars, Prediction, TEMPORAL_PREFIX};
