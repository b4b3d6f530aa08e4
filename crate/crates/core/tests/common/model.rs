//! Whole-model helpers shared by the gradient, network and acceptance suites.

use ordinal_mos::network::{DualBranchModel, ModelConfig, Pooling, Temporal, Variant};
use ordinal_mos::numerics::{Bound, ParamStore, Tape, Tensor, Var};
use ordinal_mos::training::{total_loss, Criterion, TrainConfig};
use ordinal_mos::Result;

use super::{central_difference_with_kinks, norm_rel_err, random_tensor, rng};

pub type Build<'a> = dyn for<'t> Fn(&Bound<'t, '_>, &'t Tape) -> Result<Var<'t>> + 'a;

/// Pins a closure to the higher-ranked signature of [`Build`].
pub fn build_fn<F>(f: F) -> F
where
    F: for<'t> Fn(&Bound<'t, '_>, &'t Tape) -> Result<Var<'t>>,
{
    f
}

pub fn loss_value(params: &ParamStore, build: &Build<'_>) -> f64 {
    let tape = Tape::new();
    let bound = tape.bind(params);
    build(&bound, &tape).unwrap().value().item()
}

pub fn analytic(params: &ParamStore, build: &Build<'_>) -> Vec<Tensor> {
    let tape = Tape::new();
    let bound = tape.bind(params);
    let loss = build(&bound, &tape).unwrap();
    tape.grad(loss, params).unwrap()
}

pub struct Clip {
    pub audio: Tensor,
    pub text: Tensor,
    pub mi: f64,
    pub ta: f64,
}

/// Two clips of different lengths, audio width 8, text width 4.
pub fn two_clips() -> Vec<Clip> {
    let mut r = rng(21);
    vec![
        Clip {
            audio: random_tensor(&mut r, 6, 8, 1.0),
            text: random_tensor(&mut r, 3, 4, 1.0),
            mi: 2.3,
            ta: 4.1,
        },
        Clip {
            audio: random_tensor(&mut r, 8, 8, 1.0),
            text: random_tensor(&mut r, 2, 4, 1.0),
            mi: 3.7,
            ta: 1.6,
        },
    ]
}

/// Mean total loss over `clips`.
pub fn batch_loss<'t>(
    model: &DualBranchModel,
    cfg: &TrainConfig,
    clips: &[Clip],
    b: &Bound<'t, '_>,
    tape: &'t Tape,
) -> Result<Var<'t>> {
    let mut total: Option<Var<'t>> = None;
    for c in clips {
        let heads = model.forward_vars(b, tape, &c.audio, &c.text, None)?;
        let l = total_loss(model, &heads, c.mi, c.ta, cfg)?;
        total = Some(match total {
            None => l,
            Some(t) => t.add(l)?,
        });
    }
    total.expect("non-empty batch").scale(1.0 / clips.len() as f64)
}

/// Small widths matching [`two_clips`].
pub fn small_config(variant: Variant, temporal: Temporal, pooling: Pooling) -> ModelConfig {
    ModelConfig {
        variant,
        temporal,
        pooling,
        d_common: 8,
        d_hidden: 8,
        lstm_hidden: 4,
        n_heads: 2,
        ..ModelConfig::new(8, 4)
    }
}

/// Every variant × temporal encoder × pooling.
pub fn all_configurations() -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for variant in [Variant::Dora, Variant::Coral, Variant::Decoupled] {
        for temporal in [Temporal::Transformer, Temporal::Bilstm] {
            for pooling in [Pooling::Mean, Pooling::Attention] {
                out.push(small_config(variant, temporal, pooling));
            }
        }
    }
    out
}

pub struct GradCheck {
    /// Largest per-tensor norm-wise relative error and its parameter.
    pub worst: (f64, String),
    /// Elements excluded for sitting on a ReLU or |x| breakpoint.
    pub kinks: usize,
}

/// Full-model analytic gradient on the two-clip batch against central
/// differences at eps = 1e-4.
pub fn full_model_check(cfg: &ModelConfig, criterion: Criterion, init_seed: u64) -> GradCheck {
    let model = DualBranchModel::new(cfg.clone()).unwrap();
    let params = model.init_params(init_seed);
    let tcfg = TrainConfig {
        criterion,
        ..TrainConfig::default()
    };
    let clips = two_clips();
    let build = build_fn(|b, t| batch_loss(&model, &tcfg, &clips, b, t));
    let a = analytic(&params, &build);
    let (n, kinks) = central_difference_with_kinks(&params, 1e-4, &mut |p| loss_value(p, &build));
    let mut worst = (0.0, String::new());
    for (((name, ga), gn), k) in params.names().iter().zip(&a).zip(&n).zip(&kinks) {
        let err = norm_rel_err(ga, gn, k);
        if err >= worst.0 {
            worst = (err, name.clone());
        }
    }
    GradCheck {
        worst,
        kinks: kinks.iter().flatten().filter(|&&k| k).count(),
    }
}

/// Gradient of the TA loss alone with respect to every temporal parameter.
pub fn ta_grads_on_temporal(variant: Variant, temporal: Temporal, criterion: Criterion) -> Vec<f64> {
    let model = DualBranchModel::new(small_config(variant, temporal, Pooling::Attention)).unwrap();
    let params = model.init_params(2);
    let clip = &two_clips()[0];
    let cfg = TrainConfig {
        criterion,
        w_mi: 0.0,
        w_ta: 1.0,
        ..TrainConfig::default()
    };
    let tape = Tape::new();
    let bound = tape.bind(&params);
    let heads = model.forward_vars(&bound, &tape, &clip.audio, &clip.text, None).unwrap();
    let loss = total_loss(&model, &heads, clip.mi, clip.ta, &cfg).unwrap();
    let grads = tape.grad(loss, &params).unwrap();
    params
        .names()
        .iter()
        .zip(&grads)
        .filter(|(n, _)| n.starts_with("temporal."))
        .flat_map(|(_, g)| g.data().to_vec())
        .collect()
}
