use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::embedding::{read_embedding, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::labels::{SCORE_MAX, SCORE_MIN};
use crate::numerics::Tensor;

/// One rated clip. Paths are resolved against the manifest's directory on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub system_id: String,
    pub audio: PathBuf,
    pub text: PathBuf,
    pub mi: Option<f64>,
    pub ta: Option<f64>,
}

impl ClipRecord {
    fn validate(&self) -> Result<()> {
        let fail = |detail: String| Error::Manifest {
            clip_id: self.clip_id.clone(),
            detail,
        };
        if self.clip_id.is_empty() {
            return Err(fail("empty clip_id".into()));
        }
        if self.system_id.is_empty() {
            return Err(fail("empty system_id".into()));
        }
        for (name, score) in [("mi", self.mi), ("ta", self.ta)] {
            if let Some(s) = score {
                if !(SCORE_MIN..=SCORE_MAX).contains(&s) {
                    return Err(fail(format!("{name} score {s} outside [1, 5]")));
                }
            }
        }
        Ok(())
    }

    /// Both scores, or a manifest error naming the clip.
    pub fn scores(&self) -> Result<(f64, f64)> {
        match (self.mi, self.ta) {
            (Some(mi), Some(ta)) => Ok((mi, ta)),
            _ => Err(Error::Manifest {
                clip_id: self.clip_id.clone(),
                detail: "missing ground-truth score".into(),
            }),
        }
    }
}

/// A record with its embeddings loaded and widened to `f64`.
#[derive(Clone, Debug)]
pub struct Clip {
    pub record: ClipRecord,
    pub audio: Tensor,
    pub text: Tensor,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub clips: Vec<Clip>,
    pub d_audio: usize,
    pub d_text: usize,
    pub tag: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn records(&self) -> Vec<ClipRecord> {
        self.clips.iter().map(|c| c.record.clone()).collect()
    }

    /// Clips at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize], tag: &str) -> Dataset {
        Dataset {
            clips: indices.iter().map(|&i| self.clips[i].clone()).collect(),
            d_audio: self.d_audio,
            d_text: self.d_text,
            tag: tag.to_string(),
        }
    }

    /// Number of distinct systems.
    pub fn system_count(&self) -> usize {
        self.clips
            .iter()
            .map(|c| c.record.system_id.as_str())
            .collect::<HashSet<_>>()
            .len()
    }

    /// Builds a dataset from in-memory clips, checking width consistency.
    pub fn from_clips(clips: Vec<Clip>, tag: &str) -> Result<Dataset> {
        let first = clips
            .first()
            .ok_or_else(|| Error::InvalidArgument("dataset has no clips".into()))?;
        let (d_audio, d_text) = (first.audio.cols(), first.text.cols());
        let mut seen = HashSet::new();
        for c in &clips {
            c.record.validate()?;
            let fail = |detail: String| Error::Manifest {
                clip_id: c.record.clip_id.clone(),
                detail,
            };
            if !seen.insert(c.record.clip_id.as_str()) {
                return Err(fail("duplicate clip_id".into()));
            }
            if c.audio.cols() != d_audio {
                return Err(fail(format!(
                    "audio width {} differs from {d_audio}",
                    c.audio.cols()
                )));
            }
            if c.text.cols() != d_text {
                return Err(fail(format!(
                    "text width {} differs from {d_text}",
                    c.text.cols()
                )));
            }
        }
        Ok(Dataset {
            clips,
            d_audio,
            d_text,
            tag: tag.to_string(),
        })
    }
}

/// Parses manifest lines without touching the embedding files. Relative
/// paths are resolved against the manifest's directory.
pub fn read_manifest_records(path: &Path) -> Result<Vec<ClipRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: ClipRecord = serde_json::from_str(line).map_err(|e| {
            Error::json(format!("{} line {}", path.display(), lineno + 1), e)
        })?;
        rec.validate()?;
        if !seen.insert(rec.clip_id.clone()) {
            return Err(Error::Manifest {
                clip_id: rec.clip_id,
                detail: "duplicate clip_id".into(),
            });
        }
        if rec.audio.is_relative() {
            rec.audio = base.join(&rec.audio);
        }
        if rec.text.is_relative() {
            rec.text = base.join(&rec.text);
        }
        records.push(rec);
    }
    Ok(records)
}

/// Loads the manifest and every embedding it references.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let records = read_manifest_records(path)?;
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let clips = records
        .into_iter()
        .map(|record| {
            let load = |p: &Path| -> Result<EmbeddingMatrix> {
                read_embedding(p).map_err(|e| Error::Manifest {
                    clip_id: record.clip_id.clone(),
                    detail: e.to_string(),
                })
            };
            let audio = load(&record.audio)?.to_tensor();
            let text = load(&record.text)?.to_tensor();
            Ok(Clip {
                record,
                audio,
                text,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_clips(clips, &tag)
}

/// Serializes records as manifest lines. Paths beneath the manifest's
/// directory are written relative to it.
pub fn manifest_string(records: &[ClipRecord], manifest_path: &Path) -> Result<String> {
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    let mut out = String::new();
    for r in records {
        let mut line = r.clone();
        line.audio = crate::io::relative_to(&r.audio, base);
        line.text = crate::io::relative_to(&r.text, base);
        out.push_str(
            &serde_json::to_string(&line).map_err(|e| Error::json("serializing manifest", e))?,
        );
        out.push('\n');
    }
    Ok(out)
}

pub fn write_manifest(records: &[ClipRecord], path: &Path) -> Result<()> {
    crate::io::atomic_write(path, manifest_string(records, path)?.as_bytes())
}
