//! Ordinal target construction and decoding over equal-width score bins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default kernel width: one bin width of the 20-bin grid over [1, 5].
pub const DEFAULT_SIGMA: f64 = 0.2;
pub const DEFAULT_BINS: usize = 20;
pub const SCORE_MIN: f64 = 1.0;
pub const SCORE_MAX: f64 = 5.0;

/// `K` equal-width bins over `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreBins {
    k: usize,
    lo: f64,
    hi: f64,
    centers: Vec<f64>,
    boundaries: Vec<f64>,
}

impl ScoreBins {
    pub fn new(k: usize, lo: f64, hi: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 bins, got {k}")));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid score range [{lo}, {hi}]")));
        }
        let width = (hi - lo) / k as f64;
        let centers = (0..k).map(|i| lo + (i as f64 + 0.5) * width).collect();
        let boundaries = (1..k).map(|j| lo + j as f64 * width).collect();
        Ok(ScoreBins {
            k,
            lo,
            hi,
            centers,
            boundaries,
        })
    }

    /// The 20-bin MOS grid over [1, 5].
    pub fn mos() -> Self {
        ScoreBins::new(DEFAULT_BINS, SCORE_MIN, SCORE_MAX).expect("valid default bins")
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.k as f64
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// The `K − 1` interior cut points.
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    fn check_score(&self, s: f64) -> Result<()> {
        if s.is_finite() && s >= self.lo && s <= self.hi {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "score {s} outside [{}, {}]",
                self.lo, self.hi
            )))
        }
    }
}

/// Equal-width bin grid; see [`ScoreBins::new`].
pub fn make_bins(k: usize, lo: f64, hi: f64) -> Result<ScoreBins> {
    ScoreBins::new(k, lo, hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SofteningConfig {
    pub sigma: f64,
}

impl SofteningConfig {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(SofteningConfig { sigma })
        } else {
            Err(Error::InvalidArgument(format!("sigma must be > 0, got {sigma}")))
        }
    }
}

impl Default for SofteningConfig {
    fn default() -> Self {
        SofteningConfig {
            sigma: DEFAULT_SIGMA,
        }
    }
}

/// A probability vector over the bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftLabel {
    pub probs: Vec<f64>,
}

impl SoftLabel {
    pub fn one_hot(k: usize, index: usize) -> Self {
        let mut probs = vec![0.0; k];
        probs[index] = 1.0;
        SoftLabel { probs }
    }

    pub fn argmax(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            })
            .0
    }
}

/// Gaussian kernel evaluated at every bin center around `s`, normalized.
pub fn gaussian_soften(s: f64, bins: &ScoreBins, cfg: SofteningConfig) -> Result<SoftLabel> {
    bins.check_score(s)?;
    let denom = 2.0 * cfg.sigma * cfg.sigma;
    // Shift by the smallest squared distance so the peak is exp(0) and a tiny
    // sigma cannot underflow every bin to zero.
    let d2: Vec<f64> = bins.centers.iter().map(|c| (s - c) * (s - c)).collect();
    let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let mut probs: Vec<f64> = d2.iter().map(|d| (-(d - min) / denom).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(SoftLabel { probs })
}

/// Index of the bin containing `s`; boundary values go to the upper bin and
/// `hi` itself to the last bin.
pub fn hard_label(s: f64, bins: &ScoreBins) -> Result<usize> {
    bins.check_score(s)?;
    Ok(bins.boundaries.iter().filter(|&&b| s >= b).count())
}

/// `K − 1` cumulative indicators, `levels[j] = 1` iff `s > boundaries[j]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoralTarget {
    pub levels: Vec<u8>,
}

pub fn coral_targets(s: f64, bins: &ScoreBins) -> Result<CoralTarget> {
    bins.check_score(s)?;
    Ok(CoralTarget {
        levels: bins.boundaries.iter().map(|&b| u8::from(s > b)).collect(),
    })
}

/// Expected score under `dist`: `Σ p_k c_k`.
pub fn decode_expected(dist: &[f64], bins: &ScoreBins) -> Result<f64> {
    if dist.len() != bins.k {
        return Err(Error::InvalidArgument(format!(
            "distribution has {} entries, bins have {}",
            dist.len(),
            bins.k
        )));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > 1e-6 || dist.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "distribution is not normalized (sum {total})"
        )));
    }
    Ok(dist.iter().zip(&bins.centers).map(|(p, c)| p * c).sum())
}

/// Center of bin `r`, where `r` counts cumulative probabilities strictly above 0.5.
pub fn decode_coral(cumprobs: &[f64], bins: &ScoreBins) -> f64 {
    let r = cumprobs.iter().filter(|&&p| p > 0.5).count();
    bins.centers[r.min(bins.k - 1)]
}
