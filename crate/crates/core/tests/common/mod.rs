#![allow(dead_code)]

pub mod model;

use ordinal_mos::numerics::{ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central finite differences of `f` with respect to every element of `params`.
pub fn central_difference(
    params: &ParamStore,
    eps: f64,
    f: &mut dyn FnMut(&ParamStore) -> f64,
) -> Vec<Tensor> {
    let mut work = params.clone();
    let mut out = Vec::with_capacity(params.len());
    for slot in 0..params.len() {
        let n = params.tensors()[slot].len();
        let mut g = vec![0.0; n];
        for (j, gj) in g.iter_mut().enumerate() {
            let orig = work.tensors()[slot].data()[j];
            work.tensors_mut()[slot].data_mut()[j] = orig + eps;
            let plus = f(&work);
            work.tensors_mut()[slot].data_mut()[j] = orig - eps;
            let minus = f(&work);
            work.tensors_mut()[slot].data_mut()[j] = orig;
            *gj = (plus - minus) / (2.0 * eps);
        }
        out.push(Tensor::new(params.tensors()[slot].shape().to_vec(), g).unwrap());
    }
    out
}

/// Largest element-wise `|a - n| / max(|a|, |n|, floor)`.
pub fn max_elementwise_rel_err(analytic: &Tensor, numeric: &Tensor, floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Central differences plus a per-element kink flag: set where the forward
/// and backward one-sided slopes disagree by more than 10%, i.e. a ReLU or
/// |x| breakpoint lies within `eps` of the current value.
pub fn central_difference_with_kinks(
    params: &ParamStore,
    eps: f64,
    f: &mut dyn FnMut(&ParamStore) -> f64,
) -> (Vec<Tensor>, Vec<Vec<bool>>) {
    let f0 = f(params);
    let mut work = params.clone();
    let mut grads = Vec::with_capacity(params.len());
    let mut kinks = Vec::with_capacity(params.len());
    for slot in 0..params.len() {
        let n = params.tensors()[slot].len();
        let mut g = vec![0.0; n];
        let mut k = vec![false; n];
        for j in 0..n {
            let orig = work.tensors()[slot].data()[j];
            work.tensors_mut()[slot].data_mut()[j] = orig + eps;
            let plus = f(&work);
            work.tensors_mut()[slot].data_mut()[j] = orig - eps;
            let minus = f(&work);
            work.tensors_mut()[slot].data_mut()[j] = orig;
            g[j] = (plus - minus) / (2.0 * eps);
            let fwd = (plus - f0) / eps;
            let bwd = (f0 - minus) / eps;
            let gap = (fwd - bwd).abs();
            k[j] = gap > 1e-3 && gap > 0.1 * fwd.abs().max(bwd.abs());
        }
        grads.push(Tensor::new(params.tensors()[slot].shape().to_vec(), g).unwrap());
        kinks.push(k);
    }
    (grads, kinks)
}

/// `‖a - n‖ / max(‖a‖, ‖n‖, 1e-6)` over the elements not flagged in `skip`.
pub fn norm_rel_err(analytic: &Tensor, numeric: &Tensor, skip: &[bool]) -> f64 {
    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    for ((a, n), s) in analytic.data().iter().zip(numeric.data()).zip(skip) {
        if !s {
            diff += (a - n) * (a - n);
            na += a * a;
            nn += n * n;
        }
    }
    diff.sqrt() / f64::max(na, nn).sqrt().max(1e-6)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Average rank by counting: `1 + #{less} + (#{equal} - 1) / 2`.
pub fn brute_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub fn brute_spearman(x: &[f64], y: &[f64]) -> f64 {
    brute_pearson(&brute_ranks(x), &brute_ranks(y))
}

/// Tau-b by enumerating every pair.
pub fn brute_kendall(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut conc, mut disc, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] - x[j]).signum() * f64::from(u8::from(x[i] != x[j]));
            let dy = (y[i] - y[j]).signum() * f64::from(u8::from(y[i] != y[j]));
            match (dx == 0.0, dy == 0.0) {
                (true, true) => {}
                (true, false) => tx += 1,
                (false, true) => ty += 1,
                (false, false) if dx == dy => conc += 1,
                _ => disc += 1,
            }
        }
    }
    let (c, d) = (conc as f64, disc as f64);
    (c - d) / ((c + d + tx as f64) * (c + d + ty as f64)).sqrt()
}

/// Minimizes `‖Xw + b − y‖² + λ‖w‖²` by plain gradient descent with step
/// `1 / L`, where `L` bounds the Hessian's largest eigenvalue.
pub fn gd_ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let (n, p) = (x.len(), x[0].len());
    let frob: f64 = x.iter().flatten().map(|v| v * v).sum::<f64>() + n as f64;
    let step = 1.0 / (2.0 * (frob + lambda * p as f64));
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    for _ in 0..2_000_000 {
        let resid: Vec<f64> = x
            .iter()
            .zip(y)
            .map(|(row, t)| row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b - t)
            .collect();
        let mut gw: Vec<f64> = w.iter().map(|wi| 2.0 * lambda * wi).collect();
        for (row, r) in x.iter().zip(&resid) {
            for (g, a) in gw.iter_mut().zip(row) {
                *g += 2.0 * r * a;
            }
        }
        let gb = 2.0 * resid.iter().sum::<f64>();
        let gnorm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= step * g);
        b -= step * gb;
        if gnorm < 1e-11 {
            break;
        }
    }
    (w, b)
}

pub fn ordmos(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_ordmos"))
        .args(args)
        .output()
        .expect("launch ordmos")
}

/// Runs `ordmos` and panics with its stderr unless it exits 0.
pub fn ordmos_ok(args: &[&str]) -> std::process::Output {
    let out = ordmos(args);
    assert!(
        out.status.success(),
        "ordmos {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A small end-to-end run of every subcommand inside `dir`. Returns every
/// file written, relative path and contents, sorted by path.
pub fn cli_pipeline(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let small_model = [
        "--d-common", "8", "--d-hidden", "8", "--lstm-hidden", "4", "--n-heads", "2",
        "--batch-size", "4",
    ];
    ordmos_ok(&[
        "gen-synth", "--systems", "5", "--clips", "8", "--t-min", "4", "--t-max", "9",
        "--d-audio", "10", "--d-text", "4", "--seed", "3", "--out-dir", &p("data"),
    ]);
    let manifest = p("data/manifest.jsonl");
    ordmos_ok(&[
        "split", "--manifest", &manifest, "--dev-fraction", "0.25", "--seed", "1",
        "--out", &p("train.jsonl"), &p("dev.jsonl"),
    ]);
    for (name, variant, seed) in [("a", "dora", "0"), ("b", "coral", "1")] {
        let ckpt = p(&format!("{name}.ckpt"));
        let mut args = vec![
            "train", "--train", &p("train.jsonl"), "--dev", &p("dev.jsonl"), "--variant",
            variant, "--seed", seed, "--out", &ckpt, "--quiet", "--max-epochs", "3",
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        args.extend(small_model.iter().map(|s| s.to_string()));
        ordmos_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
        ordmos_ok(&[
            "predict", "--checkpoint", &ckpt, "--manifest", &p("dev.jsonl"), "--out",
            &p(&format!("{name}.pred.jsonl")),
        ]);
        ordmos_ok(&[
            "evaluate", "--predictions", &p(&format!("{name}.pred.jsonl")), "--manifest",
            &p("dev.jsonl"), "--out", &p(&format!("{name}.eval.json")),
        ]);
    }
    ordmos_ok(&[
        "ensemble", "--predictions", &p("a.pred.jsonl"), &p("b.pred.jsonl"), "--manifest",
        &p("dev.jsonl"), "--seed", "2", "--out", &p("stack.json"),
    ]);
    ordmos_ok(&[
        "ensemble-predict", "--model", &p("stack.json"), "--predictions", &p("a.pred.jsonl"),
        &p("b.pred.jsonl"), "--out", &p("stack.pred.jsonl"),
    ]);
    let mut ablate = vec![
        "ablate", "--train", &manifest, "--dev", &manifest, "--seeds", "1", "--first-seed", "4",
        "--out", &p("ablation.md"), "--runs", &p("ablation.jsonl"), "--max-epochs", "1",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    ablate.extend(small_model.iter().map(|s| s.to_string()));
    ordmos_ok(&ablate.iter().map(String::as_str).collect::<Vec<_>>());

    let mut files = Vec::new();
    collect_files(dir, dir, &mut files);
    files.sort();
    files
}

fn collect_files(root: &std::path::Path, dir: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            out.push((rel, std::fs::read(&path).unwrap()));
        }
    }
}
