//! Two-level stacking: each base model's per-clip K-bin distributions are
//! concatenated into one feature row and a Ridge meta-model per target maps
//! them to a score.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::ClipRecord;
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::labels::{ScoreBins, SofteningConfig, SCORE_MAX, SCORE_MIN};
use crate::metrics::{spearman, system_level};
use crate::predictions::{PredictionRecord, Target};

/// Regularization strengths tried on meta-validation.
pub const LAMBDA_GRID: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];

/// Fraction of clips per system used to fit the meta-model.
pub const META_TRAIN_FRACTION: f64 = 0.6;

/// One base model's predictions, keyed by its name in the roster.
#[derive(Clone, Debug)]
pub struct BaseModel {
    pub name: String,
    pub predictions: Vec<PredictionRecord>,
}

/// Feature rows for `clip_ids`: the concatenation, in roster order, of every
/// base model's K-vector for `target`.
pub fn assemble_features(
    base: &[BaseModel],
    clip_ids: &[&str],
    target: Target,
    bins: &ScoreBins,
    softening: SofteningConfig,
) -> Result<Vec<Vec<f64>>> {
    if base.is_empty() {
        return Err(Error::InvalidArgument("no base models".into()));
    }
    let lookups: Vec<HashMap<&str, &PredictionRecord>> = base
        .iter()
        .map(|m| m.predictions.iter().map(|p| (p.clip_id.as_str(), p)).collect())
        .collect();
    clip_ids
        .iter()
        .map(|&id| {
            let mut row = Vec::with_capacity(base.len() * bins.k());
            for (model, lookup) in base.iter().zip(&lookups) {
                let p = lookup.get(id).ok_or_else(|| Error::Manifest {
                    clip_id: id.to_string(),
                    detail: format!("no prediction from base model {}", model.name),
                })?;
                row.extend(p.distribution(target, bins, softening)?);
            }
            Ok(row)
        })
        .collect()
}

/// Linear model `x·w + b` fitted with an unpenalized intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

/// Minimizes `‖Xw + b − y‖² + λ‖w‖²`, solving the normal equations of the
/// column-centered problem by Cholesky factorization.
pub fn ridge_fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<RidgeModel> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InvalidArgument(format!(
            "ridge needs >= 2 rows and one target per row, got {n} rows and {} targets",
            y.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    let p = x[0].len();
    if p == 0 || x.iter().any(|r| r.len() != p) {
        return Err(Error::shape("ridge_fit", "rows must share one non-zero width"));
    }
    let xm = DMatrix::from_fn(n, p, |i, j| x[i][j]);
    let yv = DVector::from_column_slice(y);
    let x_mean = xm.row_mean();
    let y_mean = yv.mean();
    let mut xc = xm;
    for mut row in xc.row_iter_mut() {
        row -= &x_mean;
    }
    let yc = yv.add_scalar(-y_mean);
    let mut gram = xc.tr_mul(&xc);
    for i in 0..p {
        gram[(i, i)] += lambda;
    }
    let rhs = xc.tr_mul(&yc);
    let scale = gram.diagonal().max().max(f64::MIN_POSITIVE);
    let chol = gram
        .cholesky()
        .ok_or(Error::SingularSystem { lambda })?;
    let min_pivot = chol.l_dirty().diagonal().iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
    if min_pivot <= scale * 1e-13 {
        return Err(Error::SingularSystem { lambda });
    }
    let w = chol.solve(&rhs);
    let intercept = y_mean - x_mean.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>();
    let weights: Vec<f64> = w.iter().copied().collect();
    if !intercept.is_finite() || weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge_fit".into()));
    }
    Ok(RidgeModel {
        lambda,
        weights,
        intercept,
    })
}

impl RidgeModel {
    /// Unclamped `x·w + b`.
    pub fn raw(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.weights.len() {
            return Err(Error::shape(
                "ridge_predict",
                format!("row has {} features, model {}", row.len(), self.weights.len()),
            ));
        }
        Ok(self.intercept + row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
    }
}

/// `x·w + b`, clamped to the score range.
pub fn ridge_predict(model: &RidgeModel, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    x.iter()
        .map(|r| Ok(model.raw(r)?.clamp(SCORE_MIN, SCORE_MAX)))
        .collect()
}

/// Seeded 60/40 split of `records` (indices), per system: each system's clips
/// are shuffled and the first `round(0.6·n)` (at least 1, and at most `n − 1`
/// when `n ≥ 2`) go to meta-train.
pub fn meta_split(records: &[ClipRecord], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_system: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_system.entry(r.system_id.as_str()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut fit, mut val) = (Vec::new(), Vec::new());
    for (_, mut idx) in by_system {
        idx.sort_by(|&a, &b| records[a].clip_id.cmp(&records[b].clip_id));
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut k = (META_TRAIN_FRACTION * n as f64).round() as usize;
        k = k.max(1);
        if n >= 2 {
            k = k.min(n - 1);
        }
        fit.extend_from_slice(&idx[..k]);
        val.extend_from_slice(&idx[k..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}

/// System-level SRCC of `pred` against `truth`; `None` when undefined.
fn system_srcc(pred: &[f64], truth: &[f64], systems: &[&str]) -> Result<Option<f64>> {
    let (p, t) = system_level(pred, truth, systems)?;
    match spearman(&p, &t) {
        Ok(r) => Ok(Some(r)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn rank_key(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NEG_INFINITY)
}

/// Meta-validation outcome for one λ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaTrial {
    pub lambda: f64,
    pub meta_train_srcc: Option<f64>,
    pub meta_val_srcc: Option<f64>,
}

/// Everything reported for one target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub lambda: f64,
    pub trials: Vec<LambdaTrial>,
    /// Selected meta-model (fitted on meta-train) on each partition.
    pub meta_train_srcc: Option<f64>,
    pub meta_val_srcc: Option<f64>,
    /// Each base model's own decoded score on meta-validation, roster order.
    pub base_meta_val_srcc: Vec<Option<f64>>,
}

impl TargetReport {
    pub fn best_base(&self) -> Option<f64> {
        self.base_meta_val_srcc.iter().flatten().copied().reduce(f64::max)
    }
}

/// Serialized meta-model: roster order, binning and one Ridge model per target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    pub models: Vec<String>,
    pub bins: usize,
    pub sigma: f64,
    pub mi: RidgeModel,
    pub ta: RidgeModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackReport {
    pub meta_train_clips: usize,
    pub meta_val_clips: usize,
    pub mi: TargetReport,
    pub ta: TargetReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackOutcome {
    pub model: StackedModel,
    pub report: StackReport,
}

/// Configuration of [`stack`].
#[derive(Clone, Debug)]
pub struct StackConfig {
    pub seed: u64,
    pub bins: ScoreBins,
    pub softening: SofteningConfig,
    pub lambda_grid: Vec<f64>,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            seed: 0,
            bins: ScoreBins::mos(),
            softening: SofteningConfig::default(),
            lambda_grid: LAMBDA_GRID.to_vec(),
        }
    }
}

/// The penalty is scaled by the roster size so that listing every base
/// model twice yields the same predictions.
fn effective_lambda(lambda: f64, n_models: usize) -> f64 {
    lambda * n_models as f64
}

fn stack_target(
    base: &[BaseModel],
    records: &[ClipRecord],
    fit_idx: &[usize],
    val_idx: &[usize],
    target: Target,
    cfg: &StackConfig,
) -> Result<(RidgeModel, TargetReport)> {
    let truth = |idx: &[usize]| -> Result<Vec<f64>> {
        idx.iter()
            .map(|&i| {
                let (mi, ta) = records[i].scores()?;
                Ok(if target == Target::Mi { mi } else { ta })
            })
            .collect()
    };
    let ids = |idx: &[usize]| idx.iter().map(|&i| records[i].clip_id.as_str()).collect::<Vec<_>>();
    let systems = |idx: &[usize]| idx.iter().map(|&i| records[i].system_id.as_str()).collect::<Vec<_>>();
    let (fit_ids, val_ids) = (ids(fit_idx), ids(val_idx));
    let (fit_sys, val_sys) = (systems(fit_idx), systems(val_idx));
    let (y_fit, y_val) = (truth(fit_idx)?, truth(val_idx)?);
    let x_fit = assemble_features(base, &fit_ids, target, &cfg.bins, cfg.softening)?;
    let x_val = assemble_features(base, &val_ids, target, &cfg.bins, cfg.softening)?;

    let mut trials = Vec::with_capacity(cfg.lambda_grid.len());
    let mut best: Option<(RidgeModel, LambdaTrial)> = None;
    for &lambda in &cfg.lambda_grid {
        let mut m = ridge_fit(&x_fit, &y_fit, effective_lambda(lambda, base.len()))?;
        m.lambda = lambda;
        let trial = LambdaTrial {
            lambda,
            meta_train_srcc: system_srcc(&ridge_predict(&m, &x_fit)?, &y_fit, &fit_sys)?,
            meta_val_srcc: system_srcc(&ridge_predict(&m, &x_val)?, &y_val, &val_sys)?,
        };
        // Ties go to the larger (later) lambda.
        let better = match &best {
            None => true,
            Some((_, b)) => rank_key(trial.meta_val_srcc) >= rank_key(b.meta_val_srcc),
        };
        if better {
            best = Some((m, trial.clone()));
        }
        trials.push(trial);
    }
    let (_, chosen) = best.ok_or_else(|| Error::InvalidArgument("empty lambda grid".into()))?;

    let base_meta_val_srcc = base
        .iter()
        .map(|m| {
            let lookup: HashMap<&str, &PredictionRecord> =
                m.predictions.iter().map(|p| (p.clip_id.as_str(), p)).collect();
            let scores: Vec<f64> = val_ids
                .iter()
                .map(|id| lookup[id].score(target))
                .collect();
            system_srcc(&scores, &y_val, &val_sys)
        })
        .collect::<Result<Vec<_>>>()?;

    let all: Vec<usize> = fit_idx.iter().chain(val_idx).copied().collect();
    let x_all = assemble_features(base, &ids(&all), target, &cfg.bins, cfg.softening)?;
    let mut refit = ridge_fit(&x_all, &truth(&all)?, effective_lambda(chosen.lambda, base.len()))?;
    refit.lambda = chosen.lambda;

    Ok((
        refit,
        TargetReport {
            lambda: chosen.lambda,
            meta_train_srcc: chosen.meta_train_srcc,
            meta_val_srcc: chosen.meta_val_srcc,
            trials,
            base_meta_val_srcc,
        },
    ))
}

/// Fits the MI and TA meta-models on `records` (which carry the true scores).
pub fn stack(base: &[BaseModel], records: &[ClipRecord], cfg: &StackConfig) -> Result<StackOutcome> {
    if base.is_empty() {
        return Err(Error::InvalidArgument("no base models".into()));
    }
    let (fit_idx, val_idx) = meta_split(records, cfg.seed);
    for (name, idx) in [("meta-train", &fit_idx), ("meta-validation", &val_idx)] {
        let mut systems: Vec<&str> = idx.iter().map(|&i| records[i].system_id.as_str()).collect();
        systems.sort_unstable();
        systems.dedup();
        if systems.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "{name} partition covers {} system(s); need at least 2",
                systems.len()
            )));
        }
    }
    let (mi_model, mi) = stack_target(base, records, &fit_idx, &val_idx, Target::Mi, cfg)?;
    let (ta_model, ta) = stack_target(base, records, &fit_idx, &val_idx, Target::Ta, cfg)?;
    Ok(StackOutcome {
        model: StackedModel {
            models: base.iter().map(|m| m.name.clone()).collect(),
            bins: cfg.bins.k(),
            sigma: cfg.softening.sigma,
            mi: mi_model,
            ta: ta_model,
        },
        report: StackReport {
            meta_train_clips: fit_idx.len(),
            meta_val_clips: val_idx.len(),
            mi,
            ta,
        },
    })
}

impl StackedModel {
    pub fn bins(&self) -> Result<ScoreBins> {
        ScoreBins::new(self.bins, SCORE_MIN, SCORE_MAX)
    }

    /// Stacked `(clip_id, mi, ta)` for `clip_ids`, from base predictions
    /// listed in the same order as [`StackedModel::models`].
    pub fn predict(&self, base: &[BaseModel], clip_ids: &[&str]) -> Result<Vec<(String, f64, f64)>> {
        if base.len() != self.models.len() {
            return Err(Error::InvalidArgument(format!(
                "meta-model expects {} base models, got {}",
                self.models.len(),
                base.len()
            )));
        }
        let bins = self.bins()?;
        let softening = SofteningConfig::new(self.sigma)?;
        let x_mi = assemble_features(base, clip_ids, Target::Mi, &bins, softening)?;
        let x_ta = assemble_features(base, clip_ids, Target::Ta, &bins, softening)?;
        let mi = ridge_predict(&self.mi, &x_mi)?;
        let ta = ridge_predict(&self.ta, &x_ta)?;
        Ok(clip_ids
            .iter()
            .zip(mi.into_iter().zip(ta))
            .map(|(id, (m, t))| (id.to_string(), m, t))
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| Error::json("stacked model", e))?;
        text.push('\n');
        atomic_write(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }
}
