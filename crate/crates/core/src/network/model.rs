use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, Pooling, Temporal, Variant};
use super::layers::{
    attention_pool, bilstm_layer, cross_attention, linear, mean_pool, mlp_head,
    positional_codes, transformer_layer, Init,
};
use crate::error::{Error, Result};
use crate::labels::{decode_coral, decode_expected, ScoreBins, SCORE_MAX, SCORE_MIN};
use crate::numerics::{sigmoid, softmax_in_place, Bound, ParamStore, Tape, Tensor, Var};

/// Name prefix shared by every temporal-block parameter.
pub const TEMPORAL_PREFIX: &str = "temporal.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Softmax over `K` bins.
    Distribution,
    /// `K − 1` sigmoid cumulative probabilities `P(Y > k)`.
    Cumulative,
}

/// One head's raw outputs, their normalized form and the decoded score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadOutput {
    pub kind: HeadKind,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub score: f64,
}

impl HeadOutput {
    pub fn from_logits(kind: HeadKind, logits: Vec<f64>, bins: &ScoreBins) -> Result<Self> {
        let (probs, score) = match kind {
            HeadKind::Distribution => {
                let mut probs = logits.clone();
                softmax_in_place(&mut probs);
                let score = decode_expected(&probs, bins)?;
                (probs, score)
            }
            HeadKind::Cumulative => {
                let probs: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
                let score = decode_coral(&probs, bins);
                (probs, score)
            }
        };
        Ok(HeadOutput {
            kind,
            logits,
            probs,
            score: score.clamp(SCORE_MIN, SCORE_MAX),
        })
    }
}

/// Per-clip model output for both targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mi: HeadOutput,
    pub ta: HeadOutput,
}

impl Prediction {
    pub fn mi_score(&self) -> f64 {
        self.mi.score
    }

    pub fn ta_score(&self) -> f64 {
        self.ta.score
    }
}

/// Head logits recorded on a tape, each `[1, head_width]`.
pub struct HeadVars<'t> {
    pub mi: Var<'t>,
    pub ta: Var<'t>,
}

/// The dual-branch MI/TA network.
#[derive(Clone, Debug, PartialEq)]
pub struct DualBranchModel {
    cfg: ModelConfig,
    bins: ScoreBins,
}

impl DualBranchModel {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let bins = ScoreBins::new(cfg.bins, SCORE_MIN, SCORE_MAX)?;
        Ok(DualBranchModel { cfg, bins })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn bins(&self) -> &ScoreBins {
        &self.bins
    }

    pub fn head_kind(&self) -> HeadKind {
        match self.cfg.variant {
            Variant::Coral => HeadKind::Cumulative,
            _ => HeadKind::Distribution,
        }
    }

    /// Fresh parameters, deterministic in `seed`.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let c = &self.cfg;
        let mut init = Init::new(seed);
        match c.temporal {
            Temporal::Transformer => init.transformer_layer("temporal", c.d_audio),
            Temporal::Bilstm => init.bilstm_layer("temporal", c.d_audio, c.lstm_hidden),
        }
        let tw = c.temporal_width();
        if c.pooling == Pooling::Attention {
            init.attention_pool("mi_pool", tw);
        }
        init.mlp_head("mi_head", tw, c.d_hidden, c.head_width());
        let audio_src = match c.variant {
            Variant::Decoupled => c.d_audio,
            Variant::Dora | Variant::Coral => tw,
        };
        init.linear("ta.proj_audio", audio_src, c.d_common);
        init.linear("ta.proj_text", c.d_text, c.d_common);
        init.attention("ta.xattn", c.d_common);
        if c.pooling == Pooling::Attention {
            init.attention_pool("ta_pool", c.d_common);
        }
        init.mlp_head("ta_head", c.d_common, c.d_hidden, c.head_width());
        init.finish()
    }

    fn pool<'t>(&self, p: &Bound<'t, '_>, prefix: &str, seq: Var<'t>) -> Result<Var<'t>> {
        match self.cfg.pooling {
            Pooling::Mean => mean_pool(seq),
            Pooling::Attention => attention_pool(p, prefix, seq),
        }
    }

    /// Inverted dropout with a fixed mask drawn from `rng`.
    fn dropout<'t>(&self, v: Var<'t>, rng: Option<&mut ChaCha8Rng>) -> Result<Var<'t>> {
        let rate = self.cfg.dropout;
        match rng {
            Some(rng) if rate > 0.0 => {
                let (r, c) = v.dims();
                let keep = 1.0 / (1.0 - rate);
                let mask = (0..r * c)
                    .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                    .collect();
                v.mul(v.tape().constant(Tensor::matrix(r, c, mask)?))
            }
            _ => Ok(v),
        }
    }

    /// Records the forward pass of one clip on `p`'s tape.
    ///
    /// `dropout_rng` enables dropout (training only).
    pub fn forward_vars<'t>(
        &self,
        p: &Bound<'t, '_>,
        tape: &'t Tape,
        audio: &Tensor,
        text: &Tensor,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<HeadVars<'t>> {
        let c = &self.cfg;
        if audio.cols() != c.d_audio || audio.rows() == 0 {
            return Err(Error::shape(
                "forward",
                format!("audio is {:?}, model expects width {}", audio.shape(), c.d_audio),
            ));
        }
        if text.cols() != c.d_text || text.rows() == 0 {
            return Err(Error::shape(
                "forward",
                format!("text is {:?}, model expects width {}", text.shape(), c.d_text),
            ));
        }
        let za = tape.constant(audio.clone());
        let zp = tape.constant(text.clone());

        let temporal_in = if c.positional_encoding && c.temporal == Temporal::Transformer {
            za.add(tape.constant(positional_codes(audio.rows(), c.d_audio)))?
        } else {
            za
        };
        let context = match c.temporal {
            Temporal::Transformer => transformer_layer(p, "temporal", temporal_in, c.n_heads)?,
            Temporal::Bilstm => bilstm_layer(p, "temporal", temporal_in, c.lstm_hidden)?,
        };

        let mi_vec = self.pool(p, "mi_pool", context)?;
        let mi_vec = self.dropout(mi_vec, dropout_rng.as_deref_mut())?;
        let mi = mlp_head(p, "mi_head", mi_vec)?;

        let audio_src = match c.variant {
            Variant::Decoupled => za,
            Variant::Dora | Variant::Coral => context,
        };
        let audio_proj = linear(p, "ta.proj_audio", audio_src)?;
        let text_proj = linear(p, "ta.proj_text", zp)?;
        let fused = cross_attention(p, "ta.xattn", text_proj, audio_proj, c.n_heads)?;
        let ta_vec = self.pool(p, "ta_pool", fused)?;
        let ta_vec = self.dropout(ta_vec, dropout_rng)?;
        let ta = mlp_head(p, "ta_head", ta_vec)?;
        Ok(HeadVars { mi, ta })
    }

    /// Evaluation-mode prediction for one clip.
    pub fn predict(&self, params: &ParamStore, audio: &Tensor, text: &Tensor) -> Result<Prediction> {
        let tape = Tape::new();
        let bound = tape.bind(params);
        let heads = self.forward_vars(&bound, &tape, audio, text, None)?;
        let kind = self.head_kind();
        let mi_logits = heads.mi.value().data().to_vec();
        let ta_logits = heads.ta.value().data().to_vec();
        for (name, v) in [("MI head", &mi_logits), ("TA head", &ta_logits)] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(name.into()));
            }
        }
        Ok(Prediction {
            mi: HeadOutput::from_logits(kind, mi_logits, &self.bins)?,
            ta: HeadOutput::from_logits(kind, ta_logits, &self.bins)?,
        })
    }
}
