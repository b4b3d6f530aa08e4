use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::checkpoint::Checkpoint;
use super::loss::{head_loss, Criterion};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::labels::{SofteningConfig, DEFAULT_SIGMA};
use crate::metrics::{spearman, system_level};
use crate::network::{DualBranchModel, HeadKind, HeadVars};
use crate::numerics::{ParamStore, Tape, Tensor, Var};

/// Stream offsets so init, shuffling and dropout draw from unrelated sequences.
const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DROPOUT_STREAM: u64 = 0x4452_4f50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub criterion: Criterion,
    pub sigma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub w_mi: f64,
    pub w_ta: f64,
    /// Check every tape value for NaN/inf while training (slow).
    #[serde(default)]
    pub check_finite: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            criterion: Criterion::Gaussian,
            sigma: DEFAULT_SIGMA,
            lr: 1e-3,
            batch_size: 8,
            max_epochs: 200,
            patience: 20,
            seed: 0,
            w_mi: 1.0,
            w_ta: 1.0,
            check_finite: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be >= 0, got {}", self.lr));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch size and max epochs must be >= 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be >= 1".into());
        }
        if self.w_mi < 0.0 || self.w_ta < 0.0 || self.w_mi + self.w_ta == 0.0 {
            return bad(format!(
                "loss weights must be >= 0 and not both 0, got {} and {}",
                self.w_mi, self.w_ta
            ));
        }
        SofteningConfig::new(self.sigma)?;
        Ok(())
    }
}

/// `w_mi·L_mi + w_ta·L_ta` for one clip's head outputs.
pub fn total_loss<'t>(
    model: &DualBranchModel,
    heads: &HeadVars<'t>,
    mi: f64,
    ta: f64,
    cfg: &TrainConfig,
) -> Result<Var<'t>> {
    let softening = SofteningConfig::new(cfg.sigma)?;
    let cumulative = model.head_kind() == HeadKind::Cumulative;
    let bins = model.bins();
    let l_mi = head_loss(heads.mi, mi, bins, cfg.criterion, softening, cumulative)?;
    let l_ta = head_loss(heads.ta, ta, bins, cfg.criterion, softening, cumulative)?;
    l_mi.scale(cfg.w_mi)?.add(l_ta.scale(cfg.w_ta)?)
}

/// Dev-set system-level SRCC for both targets. Undefined correlations are `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevScore {
    pub srcc_mi: Option<f64>,
    pub srcc_ta: Option<f64>,
}

impl DevScore {
    /// Mean of the two SRCCs; an undefined one ranks below every defined value.
    pub fn selection_metric(&self) -> f64 {
        match (self.srcc_mi, self.srcc_ta) {
            (Some(a), Some(b)) => 0.5 * (a + b),
            _ => f64::NEG_INFINITY,
        }
    }
}

pub fn dev_score(model: &DualBranchModel, params: &ParamStore, dev: &Dataset) -> Result<DevScore> {
    let mut mi = Vec::with_capacity(dev.len());
    let mut ta = Vec::with_capacity(dev.len());
    let mut true_mi = Vec::with_capacity(dev.len());
    let mut true_ta = Vec::with_capacity(dev.len());
    let mut systems = Vec::with_capacity(dev.len());
    for clip in &dev.clips {
        let (m, t) = clip.record.scores()?;
        let pred = model.predict(params, &clip.audio, &clip.text)?;
        mi.push(pred.mi_score());
        ta.push(pred.ta_score());
        true_mi.push(m);
        true_ta.push(t);
        systems.push(clip.record.system_id.as_str());
    }
    let srcc = |p: &[f64], t: &[f64]| -> Result<Option<f64>> {
        let (sp, st) = system_level(p, t, &systems)?;
        match spearman(&sp, &st) {
            Ok(r) => Ok(Some(r)),
            Err(Error::UndefinedCorrelation(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    Ok(DevScore {
        srcc_mi: srcc(&mi, &true_mi)?,
        srcc_ta: srcc(&ta, &true_ta)?,
    })
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: DevScore,
}

/// Patience-based early stopping on a metric where larger is better.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// Records one epoch's metric. Returns whether it is the new best.
    /// The first observation is always the best so far.
    pub fn observe(&mut self, metric: f64) -> bool {
        let improved = match self.best {
            None => true,
            Some(b) => metric > b,
        };
        if improved {
            self.best = Some(metric);
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        improved
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the best dev epoch.
    pub params: ParamStore,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub log: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn checkpoint(&self, model: &DualBranchModel, cfg: &TrainConfig) -> Checkpoint {
        Checkpoint {
            model: model.config().clone(),
            training: Some(cfg.clone()),
            best_epoch: Some(self.best_epoch),
            params: self.params.clone(),
        }
    }

    /// Tab-separated log: epoch, train loss, dev SRCC_MI, dev SRCC_TA.
    pub fn log_tsv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.6}"));
        let mut out = String::from("epoch\ttrain_loss\tdev_srcc_mi\tdev_srcc_ta\n");
        for r in &self.log {
            out.push_str(&format!(
                "{}\t{:.6}\t{}\t{}\n",
                r.epoch,
                r.train_loss,
                fmt(r.dev.srcc_mi),
                fmt(r.dev.srcc_ta)
            ));
        }
        out
    }
}

fn check_splits(train: &Dataset, dev: &Dataset, model: &DualBranchModel) -> Result<()> {
    if train.is_empty() || dev.is_empty() {
        return Err(Error::InvalidArgument("train and dev sets must be non-empty".into()));
    }
    if dev.system_count() < 2 {
        return Err(Error::InvalidArgument("dev set must cover at least 2 systems".into()));
    }
    let c = model.config();
    for ds in [train, dev] {
        if ds.d_audio != c.d_audio || ds.d_text != c.d_text {
            return Err(Error::shape(
                "train",
                format!(
                    "{} set has widths ({}, {}), model expects ({}, {})",
                    ds.tag, ds.d_audio, ds.d_text, c.d_audio, c.d_text
                ),
            ));
        }
    }
    for clip in &train.clips {
        clip.record.scores()?;
    }
    Ok(())
}

/// Trains from the seed's fresh initialization.
pub fn train(
    model: &DualBranchModel,
    train_set: &Dataset,
    dev_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let params = model.init_params(cfg.seed);
    train_from(model, params, train_set, dev_set, cfg, &mut |_| {})
}

/// Trains starting from `params`, calling `on_epoch` after every epoch.
pub fn train_from(
    model: &DualBranchModel,
    mut params: ParamStore,
    train_set: &Dataset,
    dev_set: &Dataset,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_splits(train_set, dev_set, model)?;
    let mut adam = Adam::new(cfg.lr);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DROPOUT_STREAM);
    let use_dropout = model.config().dropout > 0.0;
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc: Vec<Tensor> = params
                .tensors()
                .iter()
                .map(|t| Tensor::new(t.shape().to_vec(), vec![0.0; t.len()]))
                .collect::<Result<_>>()?;
            for &i in batch {
                let clip = &train_set.clips[i];
                let (mi, ta) = clip.record.scores()?;
                let tape = if cfg.check_finite {
                    Tape::with_finite_checks()
                } else {
                    Tape::new()
                };
                let bound = tape.bind(&params);
                let rng = use_dropout.then_some(&mut dropout_rng);
                let diverged = || Error::Divergence {
                    epoch,
                    batch: batch_idx + 1,
                    clip_id: clip.record.clip_id.clone(),
                };
                let heads = match model.forward_vars(&bound, &tape, &clip.audio, &clip.text, rng) {
                    Err(Error::NonFinite(_)) => return Err(diverged()),
                    other => other?,
                };
                let loss = total_loss(model, &heads, mi, ta, cfg)?;
                let value = loss.value().item();
                if !value.is_finite() {
                    return Err(diverged());
                }
                let grads = match tape.grad(loss, &params) {
                    Err(Error::NonFinite(_)) => return Err(diverged()),
                    other => other?,
                };
                for (a, g) in acc.iter_mut().zip(&grads) {
                    for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                        *x += y;
                    }
                }
                loss_sum += value;
            }
            let inv = 1.0 / batch.len() as f64;
            for a in &mut acc {
                for x in a.data_mut() {
                    *x *= inv;
                }
                if a.data().iter().any(|x| !x.is_finite()) {
                    return Err(Error::Divergence {
                        epoch,
                        batch: batch_idx + 1,
                        clip_id: train_set.clips[batch[0]].record.clip_id.clone(),
                    });
                }
            }
            adam.step(&mut params, &acc)?;
        }

        let dev = dev_score(model, &params, dev_set)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            dev,
        };
        on_epoch(&record);
        log.push(record);
        if stopper.observe(dev.selection_metric()) {
            best = params.clone();
            best_epoch = epoch;
        }
        if stopper.should_stop() {
            break;
        }
    }

    Ok(TrainOutcome {
        params: best,
        best_epoch,
        best_metric: stopper.best().unwrap_or(f64::NEG_INFINITY),
        log,
    })
}
