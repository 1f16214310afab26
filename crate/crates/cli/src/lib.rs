//! Command-line front end for the `c2ae` library.
//!
//! Every command writes its outputs through a temporary file in the target
//! directory and renames it on success, so a failed run leaves nothing
//! behind. Exit codes: 0 success, 1 usage, config or data error, 2 numeric
//! failure.

pub mod config;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use c2ae::data::{format_dataset, load_dataset, mask_labels, synth_correlated, MultiLabelDataset};
use c2ae::metrics::{confusion_known, report, MetricsReport};
use c2ae::model::{load_model, train, C2AEModel, LossMode};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "c2ae",
    version,
    about = "Canonical-correlated autoencoder for multi-label data"
)]
pub struct Cli {
    /// More log output on stderr (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it with its training history.
    Train(TrainArgs),
    /// Score a model on a labeled dataset and write a metrics report.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Write per-instance scores and binary predictions as CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the calibrated threshold.
        #[arg(long, allow_negative_numbers = true)]
        threshold: Option<f64>,
    },
    /// Hide a fraction of known labels, keeping one positive per instance.
    Mask {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset with correlated labels.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the labels closest to `label` in the latent space.
    Neighbors {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        label: usize,
        #[arg(long)]
        k: usize,
    },
    /// Run the finite-difference gradient checks.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Defaults to `<out>.history.json`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub loss: Option<LossMode>,
    /// Train on partially labeled data with zero-mean label inputs.
    #[arg(long)]
    pub missing: bool,
}

/// A failed command and its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    fn usage(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

impl From<anyhow::Error> for Failure {
    /// Numeric failures from the library map to 2, everything else to 1.
    fn from(error: anyhow::Error) -> Self {
        let numeric = error.chain().any(|e| {
            matches!(
                e.downcast_ref::<c2ae::Error>(),
                Some(c2ae::Error::NonFinite(_))
            )
        });
        Failure {
            code: if numeric { 2 } else { 1 },
            error,
        }
    }
}

impl From<c2ae::Error> for Failure {
    fn from(e: c2ae::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

pub type CmdResult = Result<(), Failure>;

/// Report written by `eval`: the model's loss mode next to the metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub loss_mode: LossMode,
    pub n_instances: usize,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

/// Writes `bytes` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.flush())
        .with_context(|| format!("cannot write {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn read_dataset(path: &Path) -> anyhow::Result<MultiLabelDataset> {
    load_dataset(path).context("cannot load dataset")
}

fn read_model(path: &Path) -> anyhow::Result<C2AEModel> {
    load_model(path).context("cannot load model")
}

fn check_dims(model: &C2AEModel, ds: &MultiLabelDataset) -> anyhow::Result<()> {
    let want = (model.n_features(), model.n_labels());
    let got = (ds.n_features(), ds.n_labels());
    if want != got {
        bail!(
            "dimension mismatch: model expects d={} m={}, data has d={} m={}",
            want.0,
            want.1,
            got.0,
            got.1
        );
    }
    Ok(())
}

pub fn history_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".history.json");
    PathBuf::from(s)
}

pub fn cmd_train(args: TrainArgs) -> CmdResult {
    let file = match &args.config {
        Some(p) => RunConfig::load(p).map_err(Failure::usage)?,
        None => RunConfig::default(),
    };
    let flags = RunConfig {
        data: args.data,
        out: args.out,
        history: args.history,
        seed: args.seed,
        loss_mode: args.loss,
        zero_mean_labels: args.missing.then_some(true),
        ..RunConfig::default()
    };
    let run = flags.over(file);
    let config = run.train_config().map_err(Failure::usage)?;
    let data = run
        .data
        .clone()
        .ok_or_else(|| Failure::usage(anyhow!("no dataset given (--data or `data` in config)")))?;
    let out = run.out.clone().ok_or_else(|| {
        Failure::usage(anyhow!("no output path given (--out or `out` in config)"))
    })?;
    let history_out = run.history.clone().unwrap_or_else(|| history_path(&out));

    let ds = read_dataset(&data)?;
    if ds.has_missing() && !config.zero_mean_labels {
        log::warn!("dataset has missing labels; --missing enables zero-mean label inputs");
    }
    let (model, history) = train(&ds, &config).context("training failed")?;
    info!(
        "kept epoch {} of {}, validation micro-F1 {:.4}",
        history.best_epoch,
        history.epochs.len(),
        history.best_val_micro_f1()
    );
    let mut json = serde_json::to_string_pretty(&history).map_err(anyhow::Error::from)?;
    json.push('\n');
    write_atomic(&out, model.to_text().as_bytes())?;
    write_atomic(&history_out, json.as_bytes())?;
    Ok(())
}

pub fn evaluate(model: &C2AEModel, ds: &MultiLabelDataset) -> anyhow::Result<EvalReport> {
    check_dims(model, ds)?;
    let pred = model.predict_labels(ds.features(), None)?;
    let metrics = report(&confusion_known(&pred, ds.labels())?);
    Ok(EvalReport {
        loss_mode: model.mode(),
        n_instances: ds.n_instances(),
        metrics,
    })
}

pub fn cmd_eval(model: &Path, data: &Path, out: &Path) -> CmdResult {
    let model = read_model(model)?;
    let ds = read_dataset(data)?;
    let r = evaluate(&model, &ds)?;
    let mut json = serde_json::to_string_pretty(&r).map_err(anyhow::Error::from)?;
    json.push('\n');
    write_atomic(out, json.as_bytes())?;
    Ok(())
}

/// CSV with a header, one row per instance: scores, then 0/1 predictions.
pub fn prediction_csv(
    model: &C2AEModel,
    ds: &MultiLabelDataset,
    threshold: Option<f64>,
) -> anyhow::Result<String> {
    check_dims(model, ds)?;
    let scores = model.predict_scores(ds.features())?;
    let pred = model.predict_labels(ds.features(), threshold)?;
    let m = model.n_labels();
    let mut out = String::from("instance");
    for j in 0..m {
        write!(out, ",score_{j}").unwrap();
    }
    for j in 0..m {
        write!(out, ",label_{j}").unwrap();
    }
    out.push('\n');
    for i in 0..ds.n_instances() {
        write!(out, "{i}").unwrap();
        for j in 0..m {
            write!(out, ",{:.16e}", scores.get(j, i)).unwrap();
        }
        for j in 0..m {
            write!(out, ",{}", pred.get(j, i) as u8).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn cmd_predict(model: &Path, data: &Path, out: &Path, threshold: Option<f64>) -> CmdResult {
    let model = read_model(model)?;
    let ds = read_dataset(data)?;
    let csv = prediction_csv(&model, &ds, threshold)?;
    write_atomic(out, csv.as_bytes())?;
    Ok(())
}

pub fn cmd_mask(data: &Path, rate: f64, seed: u64, out: &Path) -> CmdResult {
    let ds = read_dataset(data)?;
    let masked = mask_labels(&ds, rate, seed)?;
    write_atomic(out, format_dataset(&masked).as_bytes())?;
    Ok(())
}

pub fn cmd_synth(n: usize, d: usize, m: usize, seed: u64, out: &Path) -> CmdResult {
    let ds = synth_correlated(n, d, m, seed)?;
    write_atomic(out, format_dataset(&ds).as_bytes())?;
    Ok(())
}

/// One `label distance` row per neighbor, nearest first.
pub fn neighbor_rows(model: &C2AEModel, label: usize, k: usize) -> anyhow::Result<String> {
    let mut out = String::new();
    for (j, dist) in model.nearest_label_neighbors(label, k)? {
        writeln!(out, "{j} {dist:.6e}").unwrap();
    }
    Ok(out)
}

pub fn cmd_neighbors(model: &Path, label: usize, k: usize) -> CmdResult {
    let model = read_model(model)?;
    print!("{}", neighbor_rows(&model, label, k)?);
    Ok(())
}

pub fn cmd_gradcheck(seed: u64) -> CmdResult {
    let results = c2ae::gradcheck::run_suite(seed)?;
    for r in &results {
        println!("{r}");
    }
    let passed = results.iter().filter(|r| r.passed()).count();
    println!("{passed}/{} checks passed", results.len());
    if passed < results.len() {
        return Err(Failure {
            code: 2,
            error: anyhow!("{} gradient checks failed", results.len() - passed),
        });
    }
    Ok(())
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval {
            model,
            data,
            report,
        } => cmd_eval(&model, &data, &report),
        Command::Predict {
            model,
            data,
            out,
            threshold,
        } => cmd_predict(&model, &data, &out, threshold),
        Command::Mask {
            data,
            rate,
            seed,
            out,
        } => cmd_mask(&data, rate, seed, &out),
        Command::Synth { n, d, m, seed, out } => cmd_synth(n, d, m, seed, &out),
        Command::Neighbors { model, label, k } => cmd_neighbors(&model, label, k),
        Command::Gradcheck { seed } => cmd_gradcheck(seed),
    }
}
