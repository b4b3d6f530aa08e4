//! Seeded ablation grid: training criterion (with the default architecture)
//! and temporal encoder × pooling (with the Gaussian criterion), summarized
//! as mean ± sd of dev system-level SRCC and KTAU.

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::Result;
use crate::metrics::{evaluate, ScoredClip};
use crate::network::{DualBranchModel, ModelConfig, Pooling, Temporal};
use crate::training::{train, Criterion, TrainConfig};

/// One grid cell: a criterion and an architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub criterion: Criterion,
    pub temporal: Temporal,
    pub pooling: Pooling,
}

/// Dev system-level rank metrics of one trained model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankScores {
    pub srcc_mi: Option<f64>,
    pub ktau_mi: Option<f64>,
    pub srcc_ta: Option<f64>,
    pub ktau_ta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRun {
    pub cell: Cell,
    pub seed: u64,
    pub best_epoch: usize,
    pub scores: RankScores,
}

/// Cells of both tables; the Gaussian/transformer/attention cell is shared.
pub fn grid(base: &ModelConfig) -> Vec<Cell> {
    let mut cells: Vec<Cell> = [Criterion::L1, Criterion::Ce, Criterion::Gaussian]
        .into_iter()
        .map(|criterion| Cell {
            criterion,
            temporal: base.temporal,
            pooling: base.pooling,
        })
        .collect();
    for pooling in [Pooling::Mean, Pooling::Attention] {
        for temporal in [Temporal::Transformer, Temporal::Bilstm] {
            let cell = Cell {
                criterion: Criterion::Gaussian,
                temporal,
                pooling,
            };
            if !cells.contains(&cell) {
                cells.push(cell);
            }
        }
    }
    cells
}

/// Dev system-level SRCC/KTAU of a trained model.
pub fn rank_scores(
    model: &DualBranchModel,
    params: &crate::numerics::ParamStore,
    dev: &Dataset,
) -> Result<RankScores> {
    let preds = dev
        .clips
        .iter()
        .map(|c| {
            let p = model.predict(params, &c.audio, &c.text)?;
            Ok(ScoredClip {
                clip_id: c.record.clip_id.clone(),
                mi: p.mi_score(),
                ta: p.ta_score(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&preds, &dev.records())?;
    Ok(RankScores {
        srcc_mi: report.sys_mi.srcc,
        ktau_mi: report.sys_mi.ktau,
        srcc_ta: report.sys_ta.srcc,
        ktau_ta: report.sys_ta.ktau,
    })
}

/// Trains every cell for every seed. `base` supplies widths and the variant;
/// `train_cfg` supplies everything but criterion and seed.
pub fn run_ablation(
    train_set: &Dataset,
    dev_set: &Dataset,
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    seeds: &[u64],
    on_run: &mut dyn FnMut(&CellRun),
) -> Result<Vec<CellRun>> {
    let mut runs = Vec::new();
    for cell in grid(base) {
        let model = DualBranchModel::new(ModelConfig {
            temporal: cell.temporal,
            pooling: cell.pooling,
            ..base.clone()
        })?;
        for &seed in seeds {
            let cfg = TrainConfig {
                criterion: cell.criterion,
                seed,
                ..train_cfg.clone()
            };
            let outcome = train(&model, train_set, dev_set, &cfg)?;
            let run = CellRun {
                cell,
                seed,
                best_epoch: outcome.best_epoch,
                scores: rank_scores(&model, &outcome.params, dev_set)?,
            };
            on_run(&run);
            runs.push(run);
        }
    }
    Ok(runs)
}

/// Mean and sample standard deviation; `None` if any value is undefined.
pub fn mean_sd(values: &[Option<f64>]) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.iter().copied().collect::<Option<_>>()?;
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, sd))
}

fn cell_stat(runs: &[CellRun], cell: Cell, f: fn(&RankScores) -> Option<f64>) -> String {
    let values: Vec<Option<f64>> = runs
        .iter()
        .filter(|r| r.cell == cell)
        .map(|r| f(&r.scores))
        .collect();
    match mean_sd(&values) {
        Some((m, s)) => format!("{m:.3} ± {s:.3}"),
        None => "undefined".into(),
    }
}

const METRICS: [(&str, fn(&RankScores) -> Option<f64>); 4] = [
    ("SRCC MI", |s| s.srcc_mi),
    ("KTAU MI", |s| s.ktau_mi),
    ("SRCC TA", |s| s.srcc_ta),
    ("KTAU TA", |s| s.ktau_ta),
];

/// Markdown tables: criteria (rows) × metrics, then pooling/metric (rows) ×
/// temporal encoder.
pub fn format_tables(runs: &[CellRun], base: &ModelConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "Training criterion ({} + {} pooling), dev system level, mean ± sd\n\n",
        base.temporal, base.pooling
    ));
    out.push_str("| Criterion | SRCC MI | KTAU MI | SRCC TA | KTAU TA |\n");
    out.push_str("|---|---|---|---|---|\n");
    for criterion in [Criterion::L1, Criterion::Ce, Criterion::Gaussian] {
        let cell = Cell {
            criterion,
            temporal: base.temporal,
            pooling: base.pooling,
        };
        let stats: Vec<String> = METRICS.iter().map(|(_, f)| cell_stat(runs, cell, *f)).collect();
        out.push_str(&format!("| {criterion} | {} |\n", stats.join(" | ")));
    }
    out.push_str("\nTemporal encoder and pooling (gaussian), dev system level, mean ± sd\n\n");
    out.push_str("| Pooling | Metric | transformer | bilstm |\n");
    out.push_str("|---|---|---|---|\n");
    for pooling in [Pooling::Mean, Pooling::Attention] {
        for (name, f) in METRICS {
            let stats: Vec<String> = [Temporal::Transformer, Temporal::Bilstm]
                .into_iter()
                .map(|temporal| {
                    cell_stat(
                        runs,
                        Cell {
                            criterion: Criterion::Gaussian,
                            temporal,
                            pooling,
                        },
                        f,
                    )
                })
                .collect();
            out.push_str(&format!("| {pooling} | {name} | {} |\n", stats.join(" | ")));
        }
    }
    out
}
