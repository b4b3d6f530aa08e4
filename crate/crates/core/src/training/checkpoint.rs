//! Checkpoint file: one line of JSON (model config, training summary and the
//! parameter manifest), a `\n`, then every parameter as little-endian `f64`
//! in manifest order. Nothing follows the payload.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::network::{DualBranchModel, ModelConfig};
use crate::numerics::{ParamStore, Tensor};

use super::trainer::TrainConfig;

pub const CHECKPOINT_FORMAT: &str = "ordmos-checkpoint-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    model: ModelConfig,
    training: Option<TrainConfig>,
    best_epoch: Option<usize>,
    params: Vec<ParamEntry>,
}

/// A model configuration with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub training: Option<TrainConfig>,
    pub best_epoch: Option<usize>,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn network(&self) -> Result<DualBranchModel> {
        DualBranchModel::new(self.model.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format: CHECKPOINT_FORMAT.into(),
            model: self.model.clone(),
            training: self.training.clone(),
            best_epoch: self.best_epoch,
            params: self
                .params
                .iter()
                .map(|(name, t)| ParamEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let mut out =
            serde_json::to_vec(&header).map_err(|e| Error::json("checkpoint header", e))?;
        out.push(b'\n');
        out.reserve(self.params.numel() * 8);
        for t in self.params.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let format_err = |detail: String| Error::Format {
            path: path.to_path_buf(),
            detail,
        };
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| format_err("missing checkpoint header".into()))?;
        let header: Header = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| Error::json(format!("{}: checkpoint header", path.display()), e))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(format_err(format!("unsupported format `{}`", header.format)));
        }
        let payload = &bytes[newline + 1..];
        let expected: usize = header
            .params
            .iter()
            .map(|p| p.shape.iter().product::<usize>() * 8)
            .sum();
        if payload.len() != expected {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: expected as u64,
                actual: payload.len() as u64,
            });
        }
        let mut params = ParamStore::new();
        let mut chunks = payload.chunks_exact(8);
        for entry in &header.params {
            let n: usize = entry.shape.iter().product();
            let data = chunks
                .by_ref()
                .take(n)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            params.insert(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?);
        }
        let ckpt = Checkpoint {
            model: header.model,
            training: header.training,
            best_epoch: header.best_epoch,
            params,
        };
        ckpt.check_against_model().map_err(|e| format_err(e.to_string()))?;
        Ok(ckpt)
    }

    /// Confirms the stored parameters are exactly what the config builds.
    fn check_against_model(&self) -> Result<()> {
        let fresh = self.network()?.init_params(0);
        let want: Vec<_> = fresh.iter().map(|(n, t)| (n, t.shape())).collect();
        let have: Vec<_> = self.params.iter().map(|(n, t)| (n, t.shape())).collect();
        if want != have {
            return Err(Error::InvalidArgument(
                "parameter manifest does not match the model configuration".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Checkpoint::from_bytes(&bytes, path)
    }
}
