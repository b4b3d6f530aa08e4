//! Per-clip prediction records (JSONL), the exchange format between
//! `predict`, `evaluate` and the stacking ensemble.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::labels::{decode_coral, gaussian_soften, ScoreBins, SofteningConfig};
use crate::metrics::ScoredClip;
use crate::network::{HeadKind, HeadOutput, Prediction};

/// One line of a predictions file. Distribution heads fill `*_dist` (K
/// probabilities), cumulative heads fill `*_cum` (K − 1 values `P(Y > k)`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub clip_id: String,
    pub mi: f64,
    pub ta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mi_dist: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mi_cum: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ta_dist: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ta_cum: Option<Vec<f64>>,
}

/// Which head of a prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Mi,
    Ta,
}

impl Target {
    pub const BOTH: [Target; 2] = [Target::Mi, Target::Ta];

    pub fn name(self) -> &'static str {
        match self {
            Target::Mi => "mi",
            Target::Ta => "ta",
        }
    }
}

fn split_head(h: &HeadOutput) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    match h.kind {
        HeadKind::Distribution => (Some(h.probs.clone()), None),
        HeadKind::Cumulative => (None, Some(h.probs.clone())),
    }
}

impl PredictionRecord {
    pub fn from_prediction(clip_id: &str, p: &Prediction) -> Self {
        let (mi_dist, mi_cum) = split_head(&p.mi);
        let (ta_dist, ta_cum) = split_head(&p.ta);
        PredictionRecord {
            clip_id: clip_id.to_string(),
            mi: p.mi.score,
            ta: p.ta.score,
            mi_dist,
            mi_cum,
            ta_dist,
            ta_cum,
        }
    }

    pub fn score(&self, target: Target) -> f64 {
        match target {
            Target::Mi => self.mi,
            Target::Ta => self.ta,
        }
    }

    pub fn scored(&self) -> ScoredClip {
        ScoredClip {
            clip_id: self.clip_id.clone(),
            mi: self.mi,
            ta: self.ta,
        }
    }

    /// A K-vector summarizing one head: the softmax distribution itself, or
    /// for cumulative heads the Gaussian-softened label of the decoded score.
    pub fn distribution(
        &self,
        target: Target,
        bins: &ScoreBins,
        softening: SofteningConfig,
    ) -> Result<Vec<f64>> {
        let (dist, cum) = match target {
            Target::Mi => (&self.mi_dist, &self.mi_cum),
            Target::Ta => (&self.ta_dist, &self.ta_cum),
        };
        let err = |detail: String| Error::Manifest {
            clip_id: self.clip_id.clone(),
            detail,
        };
        match (dist, cum) {
            (Some(d), None) if d.len() == bins.k() => Ok(d.clone()),
            (None, Some(c)) if c.len() + 1 == bins.k() => {
                Ok(gaussian_soften(decode_coral(c, bins), bins, softening)?.probs)
            }
            (Some(d), None) => Err(err(format!(
                "{}_dist has {} entries, expected {}",
                target.name(),
                d.len(),
                bins.k()
            ))),
            (None, Some(c)) => Err(err(format!(
                "{}_cum has {} entries, expected {}",
                target.name(),
                c.len(),
                bins.k() - 1
            ))),
            _ => Err(err(format!(
                "expected exactly one of {0}_dist and {0}_cum",
                target.name()
            ))),
        }
    }
}

pub fn predictions_string(records: &[PredictionRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::json("prediction", e))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_predictions(records: &[PredictionRecord], path: &Path) -> Result<()> {
    atomic_write(path, predictions_string(records)?.as_bytes())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: PredictionRecord = serde_json::from_str(line)
            .map_err(|e| Error::json(format!("{} line {}", path.display(), i + 1), e))?;
        if !(r.mi.is_finite() && r.ta.is_finite()) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("non-finite score for clip {}", r.clip_id),
            });
        }
        if !seen.insert(r.clip_id.clone()) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("duplicate clip {}", r.clip_id),
            });
        }
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist_record() -> PredictionRecord {
        let mut d = vec![0.0; 20];
        d[3] = 1.0;
        PredictionRecord {
            clip_id: "a".into(),
            mi: 1.7,
            ta: 3.1,
            mi_dist: Some(d.clone()),
            mi_cum: None,
            ta_dist: Some(d),
            ta_cum: None,
        }
    }

    #[test]
    fn cumulative_head_becomes_softened_distribution() {
        let bins = ScoreBins::mos();
        let mut r = dist_record();
        r.ta_dist = None;
        let mut cum = vec![0.9; 19];
        for c in cum.iter_mut().skip(10) {
            *c = 0.1;
        }
        r.ta_cum = Some(cum);
        let d = r.distribution(Target::Ta, &bins, SofteningConfig::default()).unwrap();
        assert_eq!(d.len(), 20);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let argmax = (0..20).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
        assert_eq!(argmax, 10);
    }

    #[test]
    fn malformed_heads_rejected() {
        let bins = ScoreBins::mos();
        let mut r = dist_record();
        r.mi_cum = Some(vec![0.5; 19]);
        assert!(r.distribution(Target::Mi, &bins, SofteningConfig::default()).is_err());
        r.mi_dist = None;
        r.mi_cum = Some(vec![0.5; 3]);
        assert!(r.distribution(Target::Mi, &bins, SofteningConfig::default()).is_err());
    }

    #[test]
    fn jsonl_round_trip_and_key_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let recs = vec![dist_record()];
        write_predictions(&recs, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(r#"{"clip_id":"a","mi":1.7,"ta":3.1,"mi_dist":["#));
        assert!(!text.contains("cum"));
        assert_eq!(read_predictions(&path).unwrap(), recs);
    }

    #[test]
    fn duplicate_clip_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        write_predictions(&[dist_record(), dist_record()], &path).unwrap();
        assert!(matches!(read_predictions(&path), Err(Error::Format { .. })));
    }
}
