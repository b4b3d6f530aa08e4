//! Acceptance run: one PASS/FAIL line per criterion on stdout, progress on
//! stderr. A FAIL line is a result, not a crash: the exit status is nonzero
//! for failed criteria only when `ACCEPTANCE_STRICT=1` is set.
//!
//! The training criteria share runs: the seed-0 gaussian DORA run of the
//! criterion comparison doubles as the learnability run, and the five
//! gaussian DORA runs are the DORA part of the stacking roster.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::model::{all_configurations, full_model_check, ta_grads_on_temporal};
use common::{brute_kendall, brute_spearman, cli_pipeline, gd_ridge, rng};
use ordinal_mos::dataio::{generate_synthetic, stratified_split, Dataset, SynthConfig};
use ordinal_mos::ensemble::{ridge_fit, stack, BaseModel, StackConfig};
use ordinal_mos::labels::{decode_expected, gaussian_soften, make_bins, ScoreBins, SofteningConfig};
use ordinal_mos::metrics::{kendall_tau_b, spearman};
use ordinal_mos::network::layers::{attention_pool, mean_pool};
use ordinal_mos::network::{DualBranchModel, ModelConfig, Temporal, Variant};
use ordinal_mos::numerics::{ParamStore, Tape, Tensor};
use ordinal_mos::predictions::PredictionRecord;
use ordinal_mos::training::{train_from, Criterion, TrainConfig, TrainOutcome};
use rand::Rng;

struct Report {
    failed: usize,
}

impl Report {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn gradient_suite(report: &mut Report) {
    let start = Instant::now();
    let mut worst = (0.0, String::new());
    let mut kinks = 0;
    for cfg in all_configurations() {
        let label = format!("{:?}/{:?}/{:?}", cfg.variant, cfg.temporal, cfg.pooling);
        let check = full_model_check(&cfg, Criterion::Gaussian, 3);
        eprintln!("  gradients {label}: {:.2e} at {}", check.worst.0, check.worst.1);
        kinks += check.kinks;
        if check.worst.0 >= worst.0 {
            worst = (check.worst.0, format!("{label} {}", check.worst.1));
        }
    }
    let elapsed = start.elapsed();
    report.record(
        "gradient suite",
        worst.0 < 1e-4 && elapsed < Duration::from_secs(300),
        format!(
            "12 configurations, worst rel err {:.2e} ({}), {kinks} kink elements excluded, {:.1}s",
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    );
}

fn decoupling(report: &mut Report) {
    let mut all_zero = true;
    let mut count = 0;
    for temporal in [Temporal::Transformer, Temporal::Bilstm] {
        for criterion in [Criterion::Gaussian, Criterion::L1, Criterion::Ce] {
            let g = ta_grads_on_temporal(Variant::Decoupled, temporal, criterion);
            count += g.len();
            all_zero &= !g.is_empty() && g.iter().all(|v| v.to_bits() == 0);
        }
    }
    report.record(
        "decoupling exactness",
        all_zero,
        format!("{count} temporal gradient entries over 6 settings, all bitwise +0.0: {all_zero}"),
    );
}

fn label_suite(report: &mut Report) {
    const CASES: usize = 1000;
    let bins = ScoreBins::mos();
    let mut r = rng(900);
    let mut bad = [0usize; 4];
    for _ in 0..CASES {
        let s = r.random_range(1.0..=5.0);
        let sigma = r.random_range(0.01..5.0);
        let y = gaussian_soften(s, &bins, SofteningConfig::new(sigma).unwrap()).unwrap();
        if (y.probs.iter().sum::<f64>() - 1.0).abs() >= 1e-12 {
            bad[0] += 1;
        }
    }
    for _ in 0..CASES {
        let k = r.random_range(2..=40);
        let b = make_bins(k, 1.0, 5.0).unwrap();
        let s = r.random_range(1.0..=5.0);
        let sigma = r.random_range(0.05..2.0);
        let y = gaussian_soften(s, &b, SofteningConfig::new(sigma).unwrap()).unwrap();
        let dist: Vec<f64> = b.centers().iter().map(|c| (s - c).abs()).collect();
        let best = dist.iter().copied().fold(f64::INFINITY, f64::min);
        if (dist[y.argmax()] - best).abs() >= 1e-12 {
            bad[1] += 1;
        }
    }
    for _ in 0..CASES {
        let s = r.random_range(1.0..=5.0);
        let sigma = r.random_range(0.15..2.0);
        let y = gaussian_soften(s, &bins, SofteningConfig::new(sigma).unwrap()).unwrap();
        let c = bins.centers();
        let ok = (0..c.len()).all(|a| {
            (0..c.len()).all(|b| (s - c[b]).abs() - (s - c[a]).abs() <= 1e-9 || y.probs[a] > y.probs[b])
        });
        if !ok {
            bad[2] += 1;
        }
    }
    let cfg = SofteningConfig::default();
    for _ in 0..CASES {
        let s1 = r.random_range(1.0..=5.0 - bins.width());
        let s2 = r.random_range(s1 + bins.width()..=5.0);
        let d1 = decode_expected(&gaussian_soften(s1, &bins, cfg).unwrap().probs, &bins).unwrap();
        let d2 = decode_expected(&gaussian_soften(s2, &bins, cfg).unwrap().probs, &bins).unwrap();
        if d1 >= d2 {
            bad[3] += 1;
        }
    }
    report.record(
        "label softening suite",
        bad.iter().all(|&b| b == 0),
        format!(
            "{CASES} cases each; failures normalization {}, argmax {}, decay {}, decode order {}",
            bad[0], bad[1], bad[2], bad[3]
        ),
    );
}

fn metric_oracle(report: &mut Report) {
    let mut r = rng(901);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 200 {
        let n = r.random_range(2..=50);
        let draw = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            let pool: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
            (0..n)
                .map(|_| {
                    if r.random_bool(0.5) {
                        pool[r.random_range(0..4)]
                    } else {
                        r.random_range(-3.0..3.0)
                    }
                })
                .collect()
        };
        let x = draw(&mut r);
        let y = draw(&mut r);
        if x.iter().all(|&v| v == x[0]) || y.iter().all(|&v| v == y[0]) {
            continue;
        }
        worst = worst
            .max((spearman(&x, &y).unwrap() - brute_spearman(&x, &y)).abs())
            .max((kendall_tau_b(&x, &y).unwrap() - brute_kendall(&x, &y)).abs());
        checked += 1;
    }
    let x = [1.0, 2.0, 3.0, 4.0];
    let y = [1.0, 3.0, 2.0, 4.0];
    let rho = spearman(&x, &y).unwrap();
    let tau = kendall_tau_b(&x, &y).unwrap();
    let hand = (rho - 0.8).abs() < 1e-15 && (tau - 2.0 / 3.0).abs() < 1e-15;
    report.record(
        "metric oracle equivalence",
        worst < 1e-12 && hand,
        format!("200 tied vectors, max deviation {worst:.1e}; hand cases rho {rho}, tau {tau:.4}"),
    );
}

fn pooling_equivalence(report: &mut Report) {
    let mut r = rng(902);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let t = r.random_range(1..40);
        let d = r.random_range(1..24);
        let seq = common::random_tensor(&mut r, t, d, 5.0);
        let mut p = ParamStore::new();
        p.insert("pool.query", Tensor::matrix(1, d, vec![0.0; d]).unwrap());
        let tape = Tape::new();
        let b = tape.bind(&p);
        let att = attention_pool(&b, "pool", tape.constant(seq.clone())).unwrap();
        let mean = mean_pool(tape.constant(seq)).unwrap();
        for (a, m) in att.value().data().iter().zip(mean.value().data()) {
            worst = worst.max((a - m).abs());
        }
    }
    report.record(
        "pooling equivalence",
        worst < 1e-12,
        format!("200 random sequences, max deviation {worst:.1e}"),
    );
}

fn ridge_oracle(report: &mut Report) {
    let mut r = rng(903);
    let (n, p) = (50, 8);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = (0..n).map(|_| r.random_range(1.0..5.0)).collect();
    let mut worst: f64 = 0.0;
    for lambda in [0.01, 1.0, 100.0] {
        let fit = ridge_fit(&x, &y, lambda).unwrap();
        let (w, b) = gd_ridge(&x, &y, lambda);
        for (a, o) in fit.weights.iter().zip(&w) {
            worst = worst.max((a - o).abs());
        }
        worst = worst.max((fit.intercept - b).abs());
    }
    let w: Vec<f64> = (0..p).map(|_| r.random_range(-2.0..2.0)).collect();
    let exact: Vec<f64> = x.iter().map(|row| 0.7 + row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()).collect();
    let fit = ridge_fit(&x, &exact, 0.0).unwrap();
    let recovery = fit
        .weights
        .iter()
        .zip(&w)
        .map(|(a, b)| (a - b).abs())
        .fold((fit.intercept - 0.7).abs(), f64::max);
    report.record(
        "ridge oracle",
        worst < 1e-6 && recovery < 1e-6,
        format!("max deviation from iterative fit {worst:.1e}; lambda=0 recovery error {recovery:.1e}"),
    );
}

struct Run {
    outcome: TrainOutcome,
    model: DualBranchModel,
    secs: f64,
}

impl Run {
    fn best(&self) -> (Option<f64>, Option<f64>) {
        let rec = &self.outcome.log[self.outcome.best_epoch - 1];
        (rec.dev.srcc_mi, rec.dev.srcc_ta)
    }
}

fn run(train_set: &Dataset, dev: &Dataset, variant: Variant, criterion: Criterion, seed: u64) -> Run {
    let cfg = ModelConfig {
        variant,
        d_common: 64,
        d_hidden: 64,
        ..ModelConfig::new(train_set.d_audio, train_set.d_text)
    };
    let model = DualBranchModel::new(cfg).unwrap();
    let tcfg = TrainConfig {
        criterion,
        seed,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let outcome = train_from(&model, model.init_params(seed), train_set, dev, &tcfg, &mut |_| {}).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let run = Run { outcome, model, secs };
    let (mi, ta) = run.best();
    eprintln!(
        "  {variant:?}/{criterion:?} seed {seed}: metric {:.4} (mi {mi:?}, ta {ta:?}), {} epochs, {secs:.1}s",
        run.outcome.best_metric,
        run.outcome.log.len()
    );
    run
}

fn predictions(run: &Run, name: &str, dev: &Dataset) -> BaseModel {
    let predictions = dev
        .clips
        .iter()
        .map(|c| {
            let p = run.model.predict(&run.outcome.params, &c.audio, &c.text).unwrap();
            PredictionRecord::from_prediction(&c.record.clip_id, &p)
        })
        .collect();
    BaseModel {
        name: name.into(),
        predictions,
    }
}

fn training_criteria(report: &mut Report) {
    let data = generate_synthetic(&SynthConfig::default()).unwrap();
    let (train_set, dev) = stratified_split(&data.dataset, 0.2, 0).unwrap();
    let criteria = [Criterion::Gaussian, Criterion::L1, Criterion::Ce];
    let mut table = [[0.0; 5]; 3];
    let mut table_secs = 0.0;
    let mut dora = Vec::new();
    for seed in 0..5u64 {
        for (c, &criterion) in criteria.iter().enumerate() {
            let r = run(&train_set, &dev, Variant::Dora, criterion, seed);
            table[c][seed as usize] = r.outcome.best_metric;
            table_secs += r.secs;
            if criterion == Criterion::Gaussian {
                dora.push(r);
            }
        }
    }
    let mean = |row: &[f64; 5]| row.iter().sum::<f64>() / 5.0;
    let (g, l1, ce) = (mean(&table[0]), mean(&table[1]), mean(&table[2]));
    let wins = (0..5).filter(|&s| table[0][s] > table[1][s] && table[0][s] > table[2][s]).count();
    report.record(
        "directional criterion comparison",
        g >= l1.max(ce) - 0.02 && wins >= 4 && table_secs < 3600.0,
        format!(
            "mean dev system SRCC gaussian {g:.4}, l1 {l1:.4}, ce {ce:.4}; gaussian strictly highest in {wins}/5 seeds; {table_secs:.0}s"
        ),
    );

    let first = &dora[0];
    let (mi, ta) = first.best();
    let (mi, ta) = (mi.unwrap_or(f64::NAN), ta.unwrap_or(f64::NAN));
    report.record(
        "end-to-end learnability",
        mi >= 0.90 && ta >= 0.85 && first.outcome.log.len() <= 200 && first.secs < 600.0,
        format!(
            "seed 0 dev system SRCC mi {mi:.4}, ta {ta:.4} at epoch {} of {}, {:.1}s",
            first.outcome.best_epoch,
            first.outcome.log.len(),
            first.secs
        ),
    );

    let mut roster: Vec<BaseModel> = dora
        .iter()
        .enumerate()
        .map(|(s, r)| predictions(r, &format!("dora-{s}"), &dev))
        .collect();
    for variant in [Variant::Coral, Variant::Decoupled] {
        for seed in 0..2u64 {
            let r = run(&train_set, &dev, variant, Criterion::Gaussian, seed);
            roster.push(predictions(&r, &format!("{variant:?}-{seed}").to_lowercase(), &dev));
        }
    }
    let out = stack(&roster, &dev.records(), &StackConfig::default()).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, t) in [("mi", &out.report.mi), ("ta", &out.report.ta)] {
        let meta = t.meta_val_srcc.unwrap_or(f64::NAN);
        let best = t.best_base().unwrap_or(f64::NAN);
        pass &= meta >= best - 0.02;
        parts.push(format!("{name} stacked {meta:.4} vs best base {best:.4} (lambda {})", t.lambda));
    }
    report.record("stacking sanity", pass, format!("9 base models; {}", parts.join("; ")));
}

fn determinism(report: &mut Report) {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = cli_pipeline(a.path());
    let second = cli_pipeline(b.path());
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    report.record(
        "determinism",
        first.len() == second.len() && differing.is_empty(),
        format!("{} pipeline files compared, differing: {differing:?}", first.len()),
    );
}

fn main() -> ExitCode {
    let mut report = Report { failed: 0 };
    let steps: [(&str, fn(&mut Report)); 8] = [
        ("gradient suite", gradient_suite),
        ("decoupling", decoupling),
        ("label suite", label_suite),
        ("metric oracle", metric_oracle),
        ("pooling equivalence", pooling_equivalence),
        ("ridge oracle", ridge_oracle),
        ("determinism", determinism),
        ("training runs", training_criteria),
    ];
    for (name, step) in steps {
        eprintln!("running {name}");
        step(&mut report);
    }
    println!("{} criteria failed", report.failed);
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if report.failed > 0 && strict {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
