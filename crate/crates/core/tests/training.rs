//! Training-loop contracts: early stopping, determinism, memorization,
//! divergence reporting, Adam behavior and planted-structure learnability.

mod common;

use common::{random_tensor, rng};
use ordinal_mos::dataio::{generate_synthetic, stratified_split, Clip, ClipRecord, Dataset, SynthConfig};
use ordinal_mos::labels::{gaussian_soften, ScoreBins, SofteningConfig};
use ordinal_mos::metrics::spearman;
use ordinal_mos::network::{DualBranchModel, ModelConfig};
use ordinal_mos::numerics::{ParamStore, Tensor};
use ordinal_mos::training::{train, train_from, Adam, Criterion, TrainConfig};
use ordinal_mos::Error;

fn clip(id: &str, system: &str, audio: Tensor, text: Tensor, mi: f64, ta: f64) -> Clip {
    Clip {
        record: ClipRecord {
            clip_id: id.into(),
            system_id: system.into(),
            audio: format!("{id}.audio.emb").into(),
            text: format!("{id}.text.emb").into(),
            mi: Some(mi),
            ta: Some(ta),
        },
        audio,
        text,
    }
}

fn tiny_dataset(seed: u64) -> Dataset {
    let mut r = rng(seed);
    let scores = [(1.7, 4.2), (4.4, 2.1), (2.9, 3.3), (3.6, 1.4)];
    let clips = scores
        .iter()
        .enumerate()
        .map(|(i, &(mi, ta))| {
            let t = 4 + i;
            clip(
                &format!("c{i}"),
                &format!("s{}", i % 2),
                random_tensor(&mut r, t, 6, 1.0),
                random_tensor(&mut r, 3, 4, 1.0),
                mi,
                ta,
            )
        })
        .collect();
    Dataset::from_clips(clips, "tiny").unwrap()
}

fn tiny_model() -> DualBranchModel {
    DualBranchModel::new(ModelConfig {
        d_common: 16,
        d_hidden: 16,
        n_heads: 2,
        ..ModelConfig::new(6, 4)
    })
    .unwrap()
}

#[test]
fn patience_one_with_flat_metric_stops_after_two_epochs() {
    let ds = tiny_dataset(1);
    let cfg = TrainConfig {
        lr: 0.0,
        patience: 1,
        max_epochs: 50,
        ..TrainConfig::default()
    };
    let out = train(&tiny_model(), &ds, &ds, &cfg).unwrap();
    assert_eq!(out.log.len(), 2);
    assert_eq!(out.best_epoch, 1);
    assert_eq!(out.log[0].dev, out.log[1].dev);
}

#[test]
fn same_seed_gives_identical_checkpoint_bytes() {
    let ds = tiny_dataset(2);
    let model = tiny_model();
    let cfg = TrainConfig {
        max_epochs: 4,
        batch_size: 2,
        seed: 9,
        ..TrainConfig::default()
    };
    let a = train(&model, &ds, &ds, &cfg).unwrap();
    let b = train(&model, &ds, &ds, &cfg).unwrap();
    let bytes_a = a.checkpoint(&model, &cfg).to_bytes().unwrap();
    let bytes_b = b.checkpoint(&model, &cfg).to_bytes().unwrap();
    assert_eq!(bytes_a, bytes_b);
    assert_eq!(a.log_tsv(), b.log_tsv());

    let other = TrainConfig { seed: 10, ..cfg.clone() };
    let c = train(&model, &ds, &ds, &other).unwrap();
    assert_ne!(bytes_a, c.checkpoint(&model, &other).to_bytes().unwrap());
}

/// Soft cross-entropy is bounded below by the target entropy, so the
/// memorization target is the excess over that floor (the KL divergence).
#[test]
fn gaussian_criterion_memorizes_four_clips() {
    let ds = tiny_dataset(3);
    let bins = ScoreBins::mos();
    let soft = SofteningConfig::default();
    let entropy = |s: f64| -> f64 {
        let y = gaussian_soften(s, &bins, soft).unwrap();
        -y.probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    };
    let floor: f64 = ds
        .clips
        .iter()
        .map(|c| entropy(c.record.mi.unwrap()) + entropy(c.record.ta.unwrap()))
        .sum::<f64>()
        / ds.len() as f64;
    let cfg = TrainConfig {
        criterion: Criterion::Gaussian,
        lr: 3e-3,
        batch_size: 4,
        max_epochs: 400,
        patience: 400,
        ..TrainConfig::default()
    };
    let model = tiny_model();
    let mut losses = Vec::new();
    train_from(&model, model.init_params(0), &ds, &ds, &cfg, &mut |r| {
        losses.push(r.train_loss)
    })
    .unwrap();
    for w in losses[3..].windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "loss rose from {} to {}", w[0], w[1]);
    }
    let excess = losses.last().unwrap() - floor;
    assert!((0.0..0.05).contains(&excess), "excess over entropy {excess}");
}

#[test]
fn divergence_names_the_offending_clip() {
    let mut ds = tiny_dataset(4);
    ds.clips[2].audio.data_mut()[3] = f64::INFINITY;
    let cfg = TrainConfig {
        batch_size: 1,
        max_epochs: 1,
        ..TrainConfig::default()
    };
    match train(&tiny_model(), &ds, &ds, &cfg) {
        Err(Error::Divergence { epoch, clip_id, .. }) => {
            assert_eq!(epoch, 1);
            assert_eq!(clip_id, "c2");
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn adam_with_zero_lr_changes_nothing() {
    let mut p = ParamStore::new();
    p.insert("w", random_tensor(&mut rng(5), 3, 3, 1.0));
    let before = p.clone();
    let g = vec![random_tensor(&mut rng(6), 3, 3, 1.0)];
    let mut adam = Adam::new(0.0);
    adam.step(&mut p, &g).unwrap();
    assert_eq!(p, before);
}

#[test]
fn adam_converges_on_a_quadratic_bowl() {
    let target = [1.5, -2.0, 0.25, 3.0];
    let curvature = [1.0, 10.0, 0.5, 4.0];
    let mut p = ParamStore::new();
    p.insert("x", Tensor::matrix(1, 4, vec![0.0; 4]).unwrap());
    let mut adam = Adam::new(0.05);
    for _ in 0..2000 {
        let x = p.get("x").unwrap().data().to_vec();
        let g: Vec<f64> = (0..4).map(|i| curvature[i] * (x[i] - target[i])).collect();
        adam.step(&mut p, &[Tensor::matrix(1, 4, g).unwrap()]).unwrap();
    }
    for (x, t) in p.get("x").unwrap().data().iter().zip(target) {
        assert!((x - t).abs() < 1e-6, "{x} vs {t}");
    }
}

/// Noise-free synthetic scores are an affine map of the audio time-mean.
#[test]
fn planted_linear_quality_is_learned_within_fifty_epochs() {
    let data = generate_synthetic(&SynthConfig {
        noise_sd: 0.0,
        seed: 7,
        ..SynthConfig::default()
    })
    .unwrap();
    let (tr, dev) = stratified_split(&data.dataset, 0.2, 0).unwrap();
    let model = DualBranchModel::new(ModelConfig {
        d_common: 32,
        d_hidden: 32,
        ..ModelConfig::new(tr.d_audio, tr.d_text)
    })
    .unwrap();
    let cfg = TrainConfig {
        max_epochs: 50,
        patience: 50,
        ..TrainConfig::default()
    };
    let out = train(&model, &tr, &dev, &cfg).unwrap();
    let preds: Vec<f64> = dev
        .clips
        .iter()
        .map(|c| model.predict(&out.params, &c.audio, &c.text).unwrap().mi_score())
        .collect();
    let truth: Vec<f64> = dev.clips.iter().map(|c| c.record.mi.unwrap()).collect();
    let srcc = spearman(&preds, &truth).unwrap();
    assert!(srcc > 0.95, "clip-level SRCC_MI {srcc}");
}
