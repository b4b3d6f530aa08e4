//! Planted-structure synthetic corpus.
//!
//! Each system draws a latent quality and a latent prompt alignment. A clip's
//! audio embedding carries its quality along a hidden direction `u` (the
//! time-mean of the audio projects onto `u` as `(q - 3) / 2` exactly), and a
//! fraction `(a - 1) / 4` of its frames carry the prompt concept through a
//! hidden orthonormal map `G`; the remaining frames carry random concepts.
//! Prompts come from a small fixed vocabulary of text-space concepts. The
//! text embedding repeats the prompt concept, so `t̄ · Gᵀ x̄ ≈ (a - 1) / 4`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::embedding::{write_embedding, EmbeddingMatrix};
use super::manifest::{write_manifest, Clip, ClipRecord, Dataset};
use crate::error::{Error, Result};
use crate::labels::{SCORE_MAX, SCORE_MIN};
use crate::numerics::Tensor;

const FRAME_NOISE: f64 = 0.5;
const CONCEPT_GAIN: f64 = 1.0;
const TEXT_NOISE: f64 = 0.1;
const CLIP_JITTER: f64 = 0.25;
const TEXT_ROWS: (usize, usize) = (6, 12);
const PROMPT_VOCAB: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_systems: usize,
    pub clips_per_system: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub d_audio: usize,
    pub d_text: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_systems: 16,
            clips_per_system: 24,
            t_min: 20,
            t_max: 60,
            d_audio: 32,
            d_text: 16,
            noise_sd: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_systems < 2 {
            return bad(format!("need at least 2 systems, got {}", self.n_systems));
        }
        if self.clips_per_system < 1 {
            return bad("need at least 1 clip per system".into());
        }
        if self.t_min < 1 || self.t_min > self.t_max {
            return bad(format!("invalid length range [{}, {}]", self.t_min, self.t_max));
        }
        if self.d_text < 1 || self.d_audio < self.d_text + 1 {
            return bad(format!(
                "d_audio ({}) must exceed d_text ({}) >= 1",
                self.d_audio, self.d_text
            ));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be >= 0, got {}", self.noise_sd));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemLatent {
    pub system_id: String,
    pub quality: f64,
    pub alignment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipLatent {
    pub clip_id: String,
    pub quality: f64,
    pub alignment: f64,
}

/// Hidden maps and latents, written beside the manifest for verification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSidecar {
    pub config: SynthConfig,
    /// Unit vector `u` in audio space.
    pub quality_dir: Vec<f64>,
    /// `d_audio x d_text` map `G` with orthonormal columns, row-major rows.
    pub align_map: Vec<Vec<f64>>,
    pub concept_gain: f64,
    /// Prompt concepts (unit vectors in text space) clips draw from.
    pub prompts: Vec<Vec<f64>>,
    pub systems: Vec<SystemLatent>,
    pub clips: Vec<ClipLatent>,
}

impl SyntheticSidecar {
    /// Closed-form MI estimate from the audio time-mean: `3 + 2 (x̄ · u)`.
    pub fn oracle_mi(&self, audio: &Tensor) -> f64 {
        let mean = column_means(audio);
        3.0 + 2.0 * dot(&mean, &self.quality_dir)
    }

    /// Closed-form TA estimate `1 + 4 (t̄ · Gᵀ x̄) / (gain · |t̄|²)`.
    pub fn oracle_ta(&self, audio: &Tensor, text: &Tensor) -> f64 {
        let xa = column_means(audio);
        let tb = column_means(text);
        let d_text = tb.len();
        let projected: Vec<f64> = (0..d_text)
            .map(|j| xa.iter().zip(&self.align_map).map(|(x, row)| x * row[j]).sum())
            .collect();
        1.0 + 4.0 * dot(&tb, &projected) / (self.concept_gain * dot(&tb, &tb))
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub sidecar: SyntheticSidecar,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn column_means(t: &Tensor) -> Vec<f64> {
    let (r, c) = t.dims();
    let mut m = vec![0.0; c];
    for row in t.data().chunks(c) {
        for (a, b) in m.iter_mut().zip(row) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|v| *v /= r as f64);
    m
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `count` orthonormal vectors in `R^d` by Gram-Schmidt on Gaussian draws.
fn orthonormal(rng: &mut ChaCha8Rng, d: usize, count: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = unit_vector(rng, d);
        for b in &basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Evenly spread latents in `[1.5, 4.5]`, randomly assigned and jittered
/// within their stratum.
fn stratified_latents(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
        .into_iter()
        .map(|slot| {
            let u: f64 = rng.random_range(-0.25..0.25);
            1.5 + 3.0 * (slot as f64 + 0.5 + u) / n as f64
        })
        .collect()
}

fn round_f32(values: Vec<f64>) -> Vec<f64> {
    values.into_iter().map(|v| f64::from(v as f32)).collect()
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let basis = orthonormal(&mut rng, cfg.d_audio, cfg.d_text + 1);
    let quality_dir = basis[0].clone();
    // G[i][j] = basis[j + 1][i].
    let align_map: Vec<Vec<f64>> = (0..cfg.d_audio)
        .map(|i| (0..cfg.d_text).map(|j| basis[j + 1][i]).collect())
        .collect();

    let prompts = if PROMPT_VOCAB <= cfg.d_text {
        orthonormal(&mut rng, cfg.d_text, PROMPT_VOCAB)
    } else {
        (0..PROMPT_VOCAB).map(|_| unit_vector(&mut rng, cfg.d_text)).collect()
    };
    let qualities = stratified_latents(&mut rng, cfg.n_systems);
    let alignments = stratified_latents(&mut rng, cfg.n_systems);
    let noise = Normal::new(0.0, cfg.noise_sd).expect("validated noise_sd");
    let frame_noise = Normal::new(0.0, FRAME_NOISE).unwrap();

    let mut systems = Vec::with_capacity(cfg.n_systems);
    let mut clip_latents = Vec::new();
    let mut clips = Vec::new();
    for s in 0..cfg.n_systems {
        let system_id = format!("S{s:02}");
        systems.push(SystemLatent {
            system_id: system_id.clone(),
            quality: qualities[s],
            alignment: alignments[s],
        });
        for c in 0..cfg.clips_per_system {
            let clip_id = format!("{system_id}_C{c:03}");
            let q = (qualities[s] + rng.random_range(-CLIP_JITTER..CLIP_JITTER))
                .clamp(SCORE_MIN, SCORE_MAX);
            let a = (alignments[s] + rng.random_range(-CLIP_JITTER..CLIP_JITTER))
                .clamp(SCORE_MIN, SCORE_MAX);
            let t = rng.random_range(cfg.t_min..=cfg.t_max);
            let prompt = prompts[rng.random_range(0..prompts.len())].clone();

            let mut frames: Vec<f64> = (0..t * cfg.d_audio)
                .map(|_| frame_noise.sample(&mut rng))
                .collect();
            // Remove the noise's time-mean along u so x̄ · u is exact.
            let mut drift = 0.0;
            for row in frames.chunks(cfg.d_audio) {
                drift += dot(row, &quality_dir);
            }
            drift /= t as f64;
            let level = (q - 3.0) / 2.0;
            let n_on = (((a - 1.0) / 4.0) * t as f64).round() as usize;
            let mut on: Vec<bool> = (0..t).map(|j| j < n_on).collect();
            on.shuffle(&mut rng);
            for (row, &is_on) in frames.chunks_mut(cfg.d_audio).zip(&on) {
                let concept = if is_on {
                    prompt.clone()
                } else {
                    unit_vector(&mut rng, cfg.d_text)
                };
                for (i, x) in row.iter_mut().enumerate() {
                    *x += (level - drift) * quality_dir[i]
                        + CONCEPT_GAIN * dot(&align_map[i], &concept);
                }
            }

            let t_text = rng.random_range(TEXT_ROWS.0..=TEXT_ROWS.1);
            let text: Vec<f64> = (0..t_text)
                .flat_map(|_| {
                    prompt
                        .iter()
                        .map(|p| p + TEXT_NOISE * rng.sample::<f64, _>(StandardNormal))
                        .collect::<Vec<_>>()
                })
                .collect();

            let mi = (q + noise.sample(&mut rng)).clamp(SCORE_MIN, SCORE_MAX);
            let ta = (a + noise.sample(&mut rng)).clamp(SCORE_MIN, SCORE_MAX);
            clip_latents.push(ClipLatent {
                clip_id: clip_id.clone(),
                quality: q,
                alignment: a,
            });
            clips.push(Clip {
                record: ClipRecord {
                    audio: format!("emb/{clip_id}_audio.emb").into(),
                    text: format!("emb/{clip_id}_text.emb").into(),
                    clip_id,
                    system_id: system_id.clone(),
                    mi: Some(mi),
                    ta: Some(ta),
                },
                // Rounded through f32 so in-memory data equals what the files hold.
                audio: Tensor::matrix(t, cfg.d_audio, round_f32(frames))?,
                text: Tensor::matrix(t_text, cfg.d_text, round_f32(text))?,
            });
        }
    }
    Ok(SyntheticData {
        dataset: Dataset::from_clips(clips, "synthetic")?,
        sidecar: SyntheticSidecar {
            config: cfg.clone(),
            quality_dir,
            align_map,
            concept_gain: CONCEPT_GAIN,
            prompts,
            systems,
            clips: clip_latents,
        },
    })
}

pub const MANIFEST_NAME: &str = "manifest.jsonl";
pub const SIDECAR_NAME: &str = "synthetic_truth.json";

/// Writes `manifest.jsonl`, the `emb/` directory and the sidecar under `dir`.
pub fn write_synthetic(data: &SyntheticData, dir: &Path) -> Result<()> {
    let mut records = Vec::with_capacity(data.dataset.len());
    for clip in &data.dataset.clips {
        let mut rec = clip.record.clone();
        rec.audio = dir.join(&rec.audio);
        rec.text = dir.join(&rec.text);
        write_embedding(&EmbeddingMatrix::from_tensor(&clip.audio)?, &rec.audio)?;
        write_embedding(&EmbeddingMatrix::from_tensor(&clip.text)?, &rec.text)?;
        records.push(rec);
    }
    write_manifest(&records, &dir.join(MANIFEST_NAME))?;
    let sidecar = serde_json::to_string_pretty(&data.sidecar)
        .map_err(|e| Error::json("serializing sidecar", e))?;
    crate::io::atomic_write(&dir.join(SIDECAR_NAME), sidecar.as_bytes())
}
