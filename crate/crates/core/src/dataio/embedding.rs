//! `EMB1` embedding files: magic, `u32` rows, `u32` cols, then row-major
//! little-endian `f32` values. No padding, no trailer.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: u64 = 12;

/// A time-by-feature matrix of encoder outputs for one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "embedding must have at least one row and column, got {rows}x{cols}"
            )));
        }
        if rows.checked_mul(cols) != Some(values.len()) {
            return Err(Error::InvalidArgument(format!(
                "{rows}x{cols} embedding needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(EmbeddingMatrix { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Widens to `f64` for the compute core.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(
            self.rows,
            self.cols,
            self.values.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("dimensions validated at construction")
    }

    /// Narrows a tensor to `f32` storage.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (r, c) = t.dims();
        EmbeddingMatrix::new(r, c, t.data().iter().map(|&v| v as f32).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN as usize + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses `bytes`; `path` is used only for error context.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
            });
        }
        if (bytes.len() as u64) < HEADER_LEN {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: HEADER_LEN,
                actual: bytes.len() as u64,
            });
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let count = (rows as u64) * (cols as u64);
        let expected = count
            .checked_mul(4)
            .and_then(|b| b.checked_add(HEADER_LEN))
            .filter(|&total| usize::try_from(total).is_ok())
            .ok_or_else(|| Error::DimensionOverflow {
                path: path.to_path_buf(),
                rows,
                cols,
            })?;
        let actual = bytes.len() as u64;
        if actual < expected {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected,
                actual,
            });
        }
        if actual > expected {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("{} trailing bytes after payload", actual - expected),
            });
        }
        if rows == 0 || cols == 0 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("empty embedding {rows}x{cols}"),
            });
        }
        let values = bytes[HEADER_LEN as usize..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(EmbeddingMatrix {
            rows: rows as usize,
            cols: cols as usize,
            values,
        })
    }
}

pub fn read_embedding(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    EmbeddingMatrix::from_bytes(&bytes, path)
}

pub fn write_embedding(matrix: &EmbeddingMatrix, path: &Path) -> Result<()> {
    if matrix.rows > u32::MAX as usize || matrix.cols > u32::MAX as usize {
        return Err(Error::DimensionOverflow {
            path: path.to_path_buf(),
            rows: u32::MAX,
            cols: u32::MAX,
        });
    }
    crate::io::atomic_write(path, &matrix.to_bytes())
}
