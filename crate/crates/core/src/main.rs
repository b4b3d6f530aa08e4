use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ordinal_mos::ablation::{format_tables, run_ablation};
use ordinal_mos::dataio::{
    generate_synthetic, load_manifest, read_manifest_records, stratified_split_indices,
    write_manifest, write_synthetic, SynthConfig,
};
use ordinal_mos::ensemble::{stack, BaseModel, StackConfig, StackedModel};
use ordinal_mos::io::atomic_write;
use ordinal_mos::labels::{ScoreBins, SofteningConfig, DEFAULT_BINS, DEFAULT_SIGMA};
use ordinal_mos::metrics::{evaluate, ScoredClip};
use ordinal_mos::network::{DualBranchModel, ModelConfig, Pooling, Temporal, Variant};
use ordinal_mos::predictions::{read_predictions, write_predictions, PredictionRecord};
use ordinal_mos::training::{train_from, Checkpoint, Criterion, TrainConfig};
use ordinal_mos::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "ordmos", version, about = "Ordinal MOS prediction: data, training, evaluation and stacking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a planted-structure synthetic corpus (manifest, embeddings, sidecar).
    GenSynth(GenSynthArgs),
    /// Split a manifest into train and dev, stratified by system.
    Split(SplitArgs),
    /// Train a model and write its checkpoint and training log.
    Train(TrainArgs),
    /// Predict every clip of a manifest.
    Predict(PredictArgs),
    /// Score predictions against a manifest's ratings.
    Evaluate(EvaluateArgs),
    /// Fit Ridge meta-models over several prediction files.
    Ensemble(EnsembleArgs),
    /// Apply a fitted meta-model to prediction files.
    EnsemblePredict(EnsemblePredictArgs),
    /// Run the criterion and temporal/pooling ablation grid over several seeds.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long, default_value_t = 16)]
    systems: usize,
    #[arg(long, default_value_t = 24)]
    clips: usize,
    #[arg(long, default_value_t = 0.3)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    t_min: usize,
    #[arg(long, default_value_t = 60)]
    t_max: usize,
    #[arg(long, default_value_t = 32)]
    d_audio: usize,
    #[arg(long, default_value_t = 16)]
    d_text: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    dev_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train and dev manifest paths.
    #[arg(long, num_args = 2, value_names = ["TRAIN", "DEV"])]
    out: Vec<PathBuf>,
}

/// Architecture flags shared by `train` and `ablate`.
#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 256)]
    d_common: usize,
    #[arg(long, default_value_t = 128)]
    d_hidden: usize,
    #[arg(long, default_value_t = 128)]
    lstm_hidden: usize,
    #[arg(long, default_value_t = 4)]
    n_heads: usize,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// Add sinusoidal position codes before the temporal transformer.
    #[arg(long)]
    positional_encoding: bool,
}

/// Optimization flags shared by `train` and `ablate`.
#[derive(Args, Clone)]
struct OptimArgs {
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = 200)]
    max_epochs: usize,
    #[arg(long, default_value_t = 20)]
    patience: usize,
    #[arg(long, default_value_t = 1.0)]
    w_mi: f64,
    #[arg(long, default_value_t = 1.0)]
    w_ta: f64,
    /// Check every intermediate value for NaN/inf (slow).
    #[arg(long)]
    check_finite: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long, default_value = "dora")]
    variant: Variant,
    #[arg(long, default_value = "transformer")]
    temporal: Temporal,
    #[arg(long, default_value = "attention")]
    pooling: Pooling,
    #[arg(long, default_value = "gaussian")]
    criterion: Criterion,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Training log path; defaults to the checkpoint path with `.log.tsv` appended.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnsembleArgs {
    /// Base-model prediction files, in roster order.
    #[arg(long, num_args = 1.., required = true)]
    predictions: Vec<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Stacked model path.
    #[arg(long)]
    out: PathBuf,
    /// Selection report path; defaults to the model path with `.report.json` appended.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EnsemblePredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Base-model prediction files, in the roster order the model was fitted with.
    #[arg(long, num_args = 1.., required = true)]
    predictions: Vec<PathBuf>,
    /// Clips to predict, in output order; defaults to the first prediction file's clips.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// Number of seeds per cell.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Also write the tables here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-run results as JSON lines.
    #[arg(long)]
    runs: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

/// Library validation errors on flag values are usage errors.
fn flag_check(r: ordinal_mos::Result<()>) -> CliResult {
    r.map_err(|e| Failure::Usage(e.to_string()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn json_line<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

fn json_pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn model_config(args: &ModelArgs, variant: Variant, temporal: Temporal, pooling: Pooling, d_audio: usize, d_text: usize) -> ModelConfig {
    ModelConfig {
        variant,
        temporal,
        pooling,
        d_common: args.d_common,
        d_hidden: args.d_hidden,
        lstm_hidden: args.lstm_hidden,
        n_heads: args.n_heads,
        bins: args.bins,
        dropout: args.dropout,
        positional_encoding: args.positional_encoding,
        ..ModelConfig::new(d_audio, d_text)
    }
}

fn train_config(args: &OptimArgs, criterion: Criterion, seed: u64) -> TrainConfig {
    TrainConfig {
        criterion,
        sigma: args.sigma,
        lr: args.lr,
        batch_size: args.batch_size,
        max_epochs: args.max_epochs,
        patience: args.patience,
        seed,
        w_mi: args.w_mi,
        w_ta: args.w_ta,
        check_finite: args.check_finite,
    }
}

fn gen_synth(a: GenSynthArgs) -> CliResult {
    let cfg = SynthConfig {
        n_systems: a.systems,
        clips_per_system: a.clips,
        t_min: a.t_min,
        t_max: a.t_max,
        d_audio: a.d_audio,
        d_text: a.d_text,
        noise_sd: a.noise_sd,
        seed: a.seed,
    };
    let data = generate_synthetic(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    write_synthetic(&data, &a.out_dir)?;
    eprintln!(
        "wrote {} clips from {} systems to {}",
        data.dataset.len(),
        cfg.n_systems,
        a.out_dir.display()
    );
    Ok(())
}

fn split(a: SplitArgs) -> CliResult {
    if !(a.dev_fraction > 0.0 && a.dev_fraction < 0.5) {
        return usage(format!("--dev-fraction must be in (0, 0.5), got {}", a.dev_fraction));
    }
    let records = read_manifest_records(&a.manifest)?;
    let (train_idx, dev_idx) = stratified_split_indices(&records, a.dev_fraction, a.seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    write_manifest(&pick(&train_idx), &a.out[0])?;
    write_manifest(&pick(&dev_idx), &a.out[1])?;
    eprintln!("train {} clips, dev {} clips", train_idx.len(), dev_idx.len());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let tcfg = train_config(&a.optim, a.criterion, a.seed);
    flag_check(tcfg.validate())?;
    let train_set = load_manifest(&a.train)?;
    let dev_set = load_manifest(&a.dev)?;
    let mcfg = model_config(&a.model, a.variant, a.temporal, a.pooling, train_set.d_audio, train_set.d_text);
    flag_check(mcfg.validate())?;
    let model = DualBranchModel::new(mcfg)?;
    let quiet = a.quiet;
    let outcome = train_from(
        &model,
        model.init_params(a.seed),
        &train_set,
        &dev_set,
        &tcfg,
        &mut |r| {
            if !quiet {
                let f = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:.4}"));
                eprintln!(
                    "epoch {:>3}  loss {:.4}  dev SRCC MI {}  TA {}",
                    r.epoch,
                    r.train_loss,
                    f(r.dev.srcc_mi),
                    f(r.dev.srcc_ta)
                );
            }
        },
    )?;
    outcome.checkpoint(&model, &tcfg).save(&a.out)?;
    let log = a.log.unwrap_or_else(|| with_suffix(&a.out, ".log.tsv"));
    atomic_write(&log, outcome.log_tsv().as_bytes())?;
    eprintln!(
        "best epoch {} (dev mean system SRCC {:.4}); checkpoint {}",
        outcome.best_epoch,
        outcome.best_metric,
        a.out.display()
    );
    Ok(())
}

fn predict(a: PredictArgs) -> CliResult {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let model = ckpt.network()?;
    let ds = load_manifest(&a.manifest)?;
    let records = ds
        .clips
        .iter()
        .map(|c| {
            let p = model.predict(&ckpt.params, &c.audio, &c.text)?;
            Ok(PredictionRecord::from_prediction(&c.record.clip_id, &p))
        })
        .collect::<ordinal_mos::Result<Vec<_>>>()?;
    write_predictions(&records, &a.out)?;
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> CliResult {
    let preds: Vec<ScoredClip> = read_predictions(&a.predictions)?
        .iter()
        .map(PredictionRecord::scored)
        .collect();
    let records = read_manifest_records(&a.manifest)?;
    let report = evaluate(&preds, &records)?.to_json();
    let text = json_pretty(&report);
    atomic_write(&a.out, text.as_bytes())?;
    print!("{text}");
    Ok(())
}

/// Roster names from file stems, made unique by position when needed.
fn load_base_models(paths: &[PathBuf]) -> CliResult<Vec<BaseModel>> {
    let stems: Vec<String> = paths
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string())
        })
        .collect();
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let name = if stems.iter().filter(|s| **s == stems[i]).count() > 1 {
                format!("{}#{}", stems[i], i + 1)
            } else {
                stems[i].clone()
            };
            Ok(BaseModel {
                name,
                predictions: read_predictions(p)?,
            })
        })
        .collect()
}

fn ensemble(a: EnsembleArgs) -> CliResult {
    let softening = SofteningConfig::new(a.sigma).map_err(|e| Failure::Usage(e.to_string()))?;
    let bins = ScoreBins::new(a.bins, 1.0, 5.0).map_err(|e| Failure::Usage(e.to_string()))?;
    let base = load_base_models(&a.predictions)?;
    let records = read_manifest_records(&a.manifest)?;
    let cfg = StackConfig {
        seed: a.seed,
        bins,
        softening,
        ..StackConfig::default()
    };
    let outcome = stack(&base, &records, &cfg)?;
    outcome.model.save(&a.out)?;
    let report_path = a.report.unwrap_or_else(|| with_suffix(&a.out, ".report.json"));
    atomic_write(&report_path, json_pretty(&outcome.report).as_bytes())?;
    for (name, t) in [("MI", &outcome.report.mi), ("TA", &outcome.report.ta)] {
        let f = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
        eprintln!(
            "{name}: lambda {}  meta-val system SRCC {}  best single {}",
            t.lambda,
            f(t.meta_val_srcc),
            f(t.best_base())
        );
    }
    Ok(())
}

fn ensemble_predict(a: EnsemblePredictArgs) -> CliResult {
    let model = StackedModel::load(&a.model)?;
    let base = load_base_models(&a.predictions)?;
    let ids: Vec<String> = match &a.manifest {
        Some(m) => read_manifest_records(m)?.into_iter().map(|r| r.clip_id).collect(),
        None => base[0].predictions.iter().map(|p| p.clip_id.clone()).collect(),
    };
    let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let records: Vec<PredictionRecord> = model
        .predict(&base, &id_refs)?
        .into_iter()
        .map(|(clip_id, mi, ta)| PredictionRecord {
            clip_id,
            mi,
            ta,
            mi_dist: None,
            mi_cum: None,
            ta_dist: None,
            ta_cum: None,
        })
        .collect();
    write_predictions(&records, &a.out)?;
    Ok(())
}

fn ablate(a: AblateArgs) -> CliResult {
    if a.seeds == 0 {
        return usage("--seeds must be >= 1");
    }
    let tcfg = train_config(&a.optim, Criterion::Gaussian, a.first_seed);
    flag_check(tcfg.validate())?;
    let train_set = load_manifest(&a.train)?;
    let dev_set = load_manifest(&a.dev)?;
    let base = model_config(
        &a.model,
        Variant::Dora,
        Temporal::Transformer,
        Pooling::Attention,
        train_set.d_audio,
        train_set.d_text,
    );
    for temporal in [Temporal::Transformer, Temporal::Bilstm] {
        flag_check(ModelConfig { temporal, ..base.clone() }.validate())?;
    }
    let seeds: Vec<u64> = (a.first_seed..a.first_seed + a.seeds).collect();
    let runs = run_ablation(&train_set, &dev_set, &base, &tcfg, &seeds, &mut |r| {
        let f = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:.3}"));
        eprintln!(
            "{} {} {} seed {}: SRCC MI {} TA {} (best epoch {})",
            r.cell.criterion,
            r.cell.temporal,
            r.cell.pooling,
            r.seed,
            f(r.scores.srcc_mi),
            f(r.scores.srcc_ta),
            r.best_epoch
        );
    })?;
    let tables = format_tables(&runs, &base);
    print!("{tables}");
    if let Some(out) = &a.out {
        atomic_write(out, tables.as_bytes())?;
    }
    if let Some(path) = &a.runs {
        let lines: String = runs.iter().map(|r| json_line(r) + "\n").collect();
        atomic_write(path, lines.as_bytes())?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::GenSynth(a) => gen_synth(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Ensemble(a) => ensemble(a),
        Command::EnsemblePredict(a) => ensemble_predict(a),
        Command::Ablate(a) => ablate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA })
        }
    }
}
