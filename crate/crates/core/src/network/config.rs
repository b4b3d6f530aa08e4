use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::DEFAULT_BINS;

/// How the TA branch is wired and which output head both branches use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Cross-attends the temporal block's output; K-bin classification heads.
    Dora,
    /// As `Dora`, with `K − 1` cumulative sigmoid outputs on both heads.
    Coral,
    /// Cross-attends the projected raw audio embeddings, so the temporal
    /// block only receives MI gradients.
    Decoupled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Temporal {
    Transformer,
    Bilstm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Attention,
}

macro_rules! impl_from_str {
    ($ty:ty { $($name:literal => $val:path),+ $(,)? }) => {
        impl std::str::FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($val),)+
                    other => Err(Error::InvalidArgument(format!(
                        "unknown {} `{other}`", stringify!($ty)
                    ))),
                }
            }
        }
        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                let name = match self { $($val => $name,)+ };
                f.write_str(name)
            }
        }
    };
}

impl_from_str!(Variant { "dora" => Variant::Dora, "coral" => Variant::Coral, "decoupled" => Variant::Decoupled });
impl_from_str!(Temporal { "transformer" => Temporal::Transformer, "bilstm" => Temporal::Bilstm });
impl_from_str!(Pooling { "mean" => Pooling::Mean, "attention" => Pooling::Attention });

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub temporal: Temporal,
    pub pooling: Pooling,
    pub d_audio: usize,
    pub d_text: usize,
    pub d_common: usize,
    pub n_heads: usize,
    pub d_hidden: usize,
    pub lstm_hidden: usize,
    pub bins: usize,
    /// Applied to pooled vectors during training only.
    pub dropout: f64,
    /// Adds sinusoidal position codes before the temporal transformer.
    pub positional_encoding: bool,
}

impl ModelConfig {
    pub fn new(d_audio: usize, d_text: usize) -> Self {
        ModelConfig {
            variant: Variant::Dora,
            temporal: Temporal::Transformer,
            pooling: Pooling::Attention,
            d_audio,
            d_text,
            d_common: 256,
            n_heads: 4,
            d_hidden: 128,
            lstm_hidden: 128,
            bins: DEFAULT_BINS,
            dropout: 0.0,
            positional_encoding: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_heads == 0 {
            return bad("n_heads must be >= 1".into());
        }
        if self.d_audio == 0 || self.d_text == 0 || self.d_common == 0 || self.d_hidden == 0 {
            return bad("all widths must be positive".into());
        }
        if self.d_common % self.n_heads != 0 {
            return bad(format!(
                "d_common {} not divisible by n_heads {}",
                self.d_common, self.n_heads
            ));
        }
        if self.temporal == Temporal::Transformer && self.d_audio % self.n_heads != 0 {
            return bad(format!(
                "d_audio {} not divisible by n_heads {}",
                self.d_audio, self.n_heads
            ));
        }
        if self.temporal == Temporal::Bilstm && self.lstm_hidden == 0 {
            return bad("lstm_hidden must be positive".into());
        }
        if self.bins < 2 {
            return bad(format!("need at least 2 bins, got {}", self.bins));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    /// Width of the temporal block's output.
    pub fn temporal_width(&self) -> usize {
        match self.temporal {
            Temporal::Transformer => self.d_audio,
            Temporal::Bilstm => 2 * self.lstm_hidden,
        }
    }

    /// Output arity of each head.
    pub fn head_width(&self) -> usize {
        match self.variant {
            Variant::Coral => self.bins - 1,
            Variant::Dora | Variant::Decoupled => self.bins,
        }
    }
}
