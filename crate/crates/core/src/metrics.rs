//! Rank-correlation and error metrics at utterance and system level.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataio::ClipRecord;
use crate::error::{Error, Result};

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("need at least two observations".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input".into()));
    }
    Ok(())
}

/// Fractional (tie-averaged) ranks starting at 1.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // Positions i..j share the mean of ranks i+1..=j.
        let rank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        i = j;
    }
    ranks
}

/// Pearson linear correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Kendall's tau-b, via Knight's `O(n log n)` merge-sort algorithm.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len();
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = (n * (n - 1) / 2) as f64;
    let tied_x = tied_pairs(pairs.iter().map(|p| p.0));
    let tied_xy = {
        let mut total = 0u64;
        let mut i = 0;
        while i < n {
            let mut j = i + 1;
            while j < n && pairs[j] == pairs[i] {
                j += 1;
            }
            let t = (j - i) as u64;
            total += t * (t - 1) / 2;
            i = j;
        }
        total as f64
    };

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf) as f64;
    let tied_y = tied_pairs(ys.iter().copied());

    if tied_x == n0 || tied_y == n0 {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    let numer = n0 - tied_x - tied_y + tied_xy - 2.0 * swaps;
    let denom = ((n0 - tied_x) * (n0 - tied_y)).sqrt();
    Ok((numer / denom).clamp(-1.0, 1.0))
}

/// Number of tied pairs in an already sorted sequence.
fn tied_pairs(sorted: impl Iterator<Item = f64>) -> f64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<f64> = None;
    for v in sorted {
        if prev == Some(v) {
            run += 1;
        } else {
            total += run * (run + 1) / 2;
            run = 0;
        }
        prev = Some(v);
    }
    total += run * (run + 1) / 2;
    total as f64
}

/// Stable merge sort counting strict inversions.
fn merge_count(xs: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = xs.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left_buf, right_buf) = buf.split_at_mut(mid);
    let mut swaps = {
        let (l, r) = xs.split_at_mut(mid);
        merge_count(l, left_buf) + merge_count(r, right_buf)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if xs[j] < xs[i] {
            buf[k] = xs[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = xs[i];
            i += 1;
        }
        k += 1;
    }
    while i < mid {
        buf[k] = xs[i];
        i += 1;
        k += 1;
    }
    while j < n {
        buf[k] = xs[j];
        j += 1;
        k += 1;
    }
    xs.copy_from_slice(&buf[..n]);
    swaps
}

pub fn mse(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64)
}

/// Per-system means of predictions and truths, ordered by system identifier.
pub fn system_level(preds: &[f64], truths: &[f64], systems: &[&str]) -> Result<(Vec<f64>, Vec<f64>)> {
    if preds.len() != truths.len() || preds.len() != systems.len() {
        return Err(Error::InvalidArgument(
            "predictions, truths and systems must have equal length".into(),
        ));
    }
    let mut groups: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for ((&p, &t), &s) in preds.iter().zip(truths).zip(systems) {
        let g = groups.entry(s).or_insert((0.0, 0.0, 0));
        g.0 += p;
        g.1 += t;
        g.2 += 1;
    }
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "system-level metrics need at least 2 systems, got {}",
            groups.len()
        )));
    }
    Ok(groups
        .values()
        .map(|&(p, t, n)| (p / n as f64, t / n as f64))
        .unzip())
}

/// SRCC, KTAU, MSE and LCC for one target at one level. Undefined
/// correlations are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub srcc: Option<f64>,
    pub ktau: Option<f64>,
    pub mse: f64,
    pub lcc: Option<f64>,
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

impl LevelMetrics {
    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<Self> {
        Ok(LevelMetrics {
            srcc: defined(spearman(pred, truth))?,
            ktau: defined(kendall_tau_b(pred, truth))?,
            mse: mse(pred, truth)?,
            lcc: defined(pearson(pred, truth))?,
        })
    }
}

/// Scalar predictions for one clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredClip {
    pub clip_id: String,
    pub mi: f64,
    pub ta: f64,
}

/// The 16 challenge cells: {utterance, system} × {MI, TA} × {SRCC, KTAU, MSE, LCC}.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub utt_mi: LevelMetrics,
    pub utt_ta: LevelMetrics,
    pub sys_mi: LevelMetrics,
    pub sys_ta: LevelMetrics,
}

impl EvalReport {
    /// Flat JSON object with keys like `sys_srcc_mi` and `utt_ktau_ta`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        let cells = [
            ("utt", "mi", &self.utt_mi),
            ("utt", "ta", &self.utt_ta),
            ("sys", "mi", &self.sys_mi),
            ("sys", "ta", &self.sys_ta),
        ];
        for (level, target, m) in cells {
            map.insert(format!("{level}_srcc_{target}"), m.srcc.into());
            map.insert(format!("{level}_ktau_{target}"), m.ktau.into());
            map.insert(format!("{level}_mse_{target}"), m.mse.into());
            map.insert(format!("{level}_lcc_{target}"), m.lcc.into());
        }
        serde_json::Value::Object(map)
    }
}

/// Joins predictions to records by clip id and fills every cell of the report.
pub fn evaluate(predictions: &[ScoredClip], records: &[ClipRecord]) -> Result<EvalReport> {
    let by_id: HashMap<&str, &ScoredClip> =
        predictions.iter().map(|p| (p.clip_id.as_str(), p)).collect();
    let mut pm = Vec::with_capacity(records.len());
    let mut pt = Vec::with_capacity(records.len());
    let mut tm = Vec::with_capacity(records.len());
    let mut tt = Vec::with_capacity(records.len());
    let mut systems = Vec::with_capacity(records.len());
    for r in records {
        let p = by_id.get(r.clip_id.as_str()).ok_or_else(|| Error::Manifest {
            clip_id: r.clip_id.clone(),
            detail: "no prediction for this clip".into(),
        })?;
        let (Some(mi), Some(ta)) = (r.mi, r.ta) else {
            return Err(Error::Manifest {
                clip_id: r.clip_id.clone(),
                detail: "missing ground-truth score".into(),
            });
        };
        pm.push(p.mi);
        pt.push(p.ta);
        tm.push(mi);
        tt.push(ta);
        systems.push(r.system_id.as_str());
    }
    let (spm, stm) = system_level(&pm, &tm, &systems)?;
    let (spt, stt) = system_level(&pt, &tt, &systems)?;
    Ok(EvalReport {
        utt_mi: LevelMetrics::compute(&pm, &tm)?,
        utt_ta: LevelMetrics::compute(&pt, &tt)?,
        sys_mi: LevelMetrics::compute(&spm, &stm)?,
        sys_ta: LevelMetrics::compute(&spt, &stt)?,
    })
}
