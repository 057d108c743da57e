//! The `enhp` command line: argument parsing, config files and provenance.
//!
//! Every command takes an optional JSON config file; flags given on the
//! command line override its fields. Every artifact written carries a
//! provenance record (command, resolved config, inputs, crate version),
//! inline for JSON outputs and as a `<file>.provenance.json` sidecar for CSV
//! and SVG outputs.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{dataset_stats, default_vocab, load_dataset, load_vocab, save_dataset, Dataset, Split};
use crate::error::{Error, Result};
use crate::gradcheck::{run_gradcheck, GradCheckConfig};
use crate::interpret::{
    cumulative_impact, embedding_topics, impact_curve, save_heatmap_svg, write_curve_csv, write_topics_csv,
    LabeledMatrix,
};
use crate::model::{load_checkpoint, save_checkpoint, Checkpoint, Integrator, IntegratorConfig};
use crate::nn::InputTransform;
use crate::predict::{evaluate, save_predictions_csv, PredictionConfig};
use crate::simulate::{simulate, HawkesGroundTruth, SimConfig};
use crate::train::{fit, save_log_csv, sweep_dims, validation_integrator, write_sweep_csv, FitConfig};

/// File name of the sequences inside a data directory.
pub const DATA_FILE: &str = "data.jsonl";
/// File name of the metadata sidecar inside a data directory.
pub const METADATA_FILE: &str = "metadata.json";

#[derive(Debug, Parser)]
#[command(name = "enhp", version, about = "Embedded neural Hawkes process toolkit")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "ENHP_THREADS")]
    pub threads: Option<usize>,
    /// Log more (-v: debug, -vv: trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Log only warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a parametric Hawkes process into a data directory.
    Simulate(SimulateArgs),
    /// Fit a model by mini-batch Adam with validation early stopping.
    Fit(FitArgs),
    /// Log-likelihood and next-event metrics on one split.
    Eval(EvalArgs),
    /// Next-event time and type predictions on one split, as CSV.
    Predict(PredictArgs),
    /// Cumulative impact matrix over [0, H].
    Impact(ImpactArgs),
    /// Samples of one impact function on [0, H].
    KernelCurve(KernelCurveArgs),
    /// Event types ranked by embedding loading per dimension.
    Topics(TopicsArgs),
    /// Finite-difference check of the likelihood gradient on random models.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub horizon: f64,
    pub seed: u64,
    pub max_events: usize,
    pub allow_supercritical: bool,
    pub num_train: usize,
    pub num_val: usize,
    pub num_test: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            horizon: sim.horizon,
            seed: sim.seed,
            max_events: sim.max_events,
            allow_supercritical: sim.allow_supercritical,
            num_train: 1000,
            num_val: 200,
            num_test: 200,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Ground-truth spec (JSON); the bundled three-type process when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Stop each sequence at this many events.
    #[arg(long)]
    pub max_events: Option<usize>,
    /// Simulate even when the branching matrix has spectral radius >= 1.
    #[arg(long)]
    pub allow_supercritical: bool,
    #[arg(long)]
    pub num_train: Option<usize>,
    #[arg(long)]
    pub num_val: Option<usize>,
    #[arg(long)]
    pub num_test: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Data directory (with data.jsonl) or a JSON-lines file with split labels.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON config file: training settings plus an optional `sweep_dims` list.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint of the best-validation model.
    #[arg(long, required_unless_present = "sweep_out")]
    pub out: Option<PathBuf>,
    /// Training log CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub tie_embeddings: Option<bool>,
    #[arg(long)]
    pub input_transform: Option<InputTransform>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Training integrator: trapezoid or monte_carlo.
    #[arg(long)]
    pub integrator: Option<Integrator>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub knots_per_interval: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_wall_seconds: Option<f64>,
    /// Fit once per listed embedding dimension and write (D, val LL) rows.
    #[arg(long, value_delimiter = ',')]
    pub sweep_dims: Option<Vec<usize>>,
    /// CSV for the dimension sweep.
    #[arg(long, requires = "sweep_dims")]
    pub sweep_out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub prediction: PredictionConfig,
    pub integrator: IntegratorConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            prediction: PredictionConfig::default(),
            integrator: validation_integrator(),
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalOptions {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Data directory or JSON-lines file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// JSON config file with `prediction` and `integrator` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub h_mult: Option<f64>,
    #[arg(long)]
    pub quad_steps: Option<usize>,
    /// Also predict each sequence's first event from the empty history.
    #[arg(long)]
    pub include_first: Option<bool>,
    /// Knots per interval of the log-likelihood trapezoid.
    #[arg(long)]
    pub knots_per_interval: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub opts: EvalOptions,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the per-event predictions as CSV.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub opts: EvalOptions,
    /// Predictions CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImpactArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Upper limit H of the integral.
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    /// Trapezoid steps on [0, H].
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Matrix CSV (row: source type, column: target type).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Heatmap SVG.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Vocabulary JSON for row and column labels.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KernelCurveArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Source type i.
    #[arg(long)]
    pub source: usize,
    /// Target type j.
    #[arg(long)]
    pub target: usize,
    #[arg(long, default_value_t = 5.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    /// Curve CSV with columns t, phi.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TopicsArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    /// Rankings CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_models: Option<usize>,
    /// Embedding dimensions to draw from.
    #[arg(long, value_delimiter = ',')]
    pub embed_dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub hidden_dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub type_counts: Option<Vec<usize>>,
    /// Report JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub corrupt: bool,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(&cli);
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return 1;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(cli: &Cli) {
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_secs()
        .try_init();
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Impact(a) => cmd_impact(a),
        Command::KernelCurve(a) => cmd_kernel_curve(a),
        Command::Topics(a) => cmd_topics(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn provenance(command: &str, config: Value, inputs: Value) -> Value {
    json!({
        "tool": "enhp",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "inputs": inputs,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Writes `<path>.provenance.json` next to a CSV or SVG artifact.
fn write_sidecar(path: &Path, prov: &Value) -> Result<()> {
    let mut name = path.as_os_str().to_owned();
    name.push(".provenance.json");
    write_json(Path::new(&name), prov)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Loads a data directory (its `data.jsonl`, with the type count from
/// `metadata.json` when present) or a single JSON-lines file.
pub fn load_data(path: &Path, expected_types: Option<usize>) -> Result<Dataset> {
    if path.is_dir() {
        let meta_path = path.join(METADATA_FILE);
        let declared = if meta_path.exists() {
            let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
            let meta: Value = serde_json::from_str(&text)?;
            meta.get("num_types").and_then(Value::as_u64).map(|m| m as usize)
        } else {
            None
        };
        if let (Some(a), Some(b)) = (declared, expected_types) {
            if a != b {
                return Err(Error::InvalidArgument(format!(
                    "data declares {a} event types but the model has {b}"
                )));
            }
        }
        load_dataset(path.join(DATA_FILE), expected_types.or(declared))
    } else {
        load_dataset(path, expected_types)
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg: SimulateConfig = read_config(a.config.as_deref())?;
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = a.max_events {
        cfg.max_events = v;
    }
    if a.allow_supercritical {
        cfg.allow_supercritical = true;
    }
    if let Some(v) = a.num_train {
        cfg.num_train = v;
    }
    if let Some(v) = a.num_val {
        cfg.num_val = v;
    }
    if let Some(v) = a.num_test {
        cfg.num_test = v;
    }
    let gt = match &a.spec {
        Some(p) => HawkesGroundTruth::load(p)?,
        None => HawkesGroundTruth::three_type(),
    };
    let sim = SimConfig {
        horizon: cfg.horizon,
        num_sequences: cfg.num_train + cfg.num_val + cfg.num_test,
        seed: cfg.seed,
        max_events: cfg.max_events,
        allow_supercritical: cfg.allow_supercritical,
        id_prefix: "sim".into(),
    };
    let out = simulate(&gt, &sim)?;
    let splits: Vec<Split> = std::iter::repeat_n(Split::Train, cfg.num_train)
        .chain(std::iter::repeat_n(Split::Val, cfg.num_val))
        .chain(std::iter::repeat_n(Split::Test, cfg.num_test))
        .collect();
    let ds = Dataset::with_splits(out.dataset.into_sequences(), splits, gt.num_types)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    save_dataset(&ds, a.out.join(DATA_FILE))?;
    let meta = json!({
        "num_types": gt.num_types,
        "ground_truth": gt,
        "spectral_radius": out.spectral_radius,
        "per_type_counts": out.per_type_counts,
        "capped_sequences": out.capped_sequences,
        "stats": dataset_stats(&ds),
        "provenance": provenance(
            "simulate",
            serde_json::to_value(&cfg)?,
            json!({ "spec": a.spec.as_deref().map(path_str).unwrap_or_else(|| "bundled:three_type".into()) }),
        ),
    });
    write_json(&a.out.join(METADATA_FILE), &meta)?;
    log::info!(
        "wrote {} sequences ({} events) to {}",
        ds.len(),
        ds.num_events(),
        a.out.display()
    );
    Ok(())
}

/// Splits a fit config file into the training settings and an optional
/// `sweep_dims` list.
fn read_fit_config(path: Option<&Path>) -> Result<(FitConfig, Option<Vec<usize>>)> {
    let Some(p) = path else {
        return Ok((FitConfig::default(), None));
    };
    let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
    let bad = |e: serde_json::Error| Error::Config(format!("{}: {e}", p.display()));
    let mut value: Value = serde_json::from_str(&text).map_err(bad)?;
    let sweep = match value.as_object_mut().and_then(|o| o.remove("sweep_dims")) {
        Some(v) => Some(serde_json::from_value(v).map_err(bad)?),
        None => None,
    };
    let cfg = serde_json::from_value(value).map_err(bad)?;
    Ok((cfg, sweep))
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let (mut cfg, file_sweep) = read_fit_config(a.config.as_deref())?;
    if let Some(v) = a.embed_dim {
        cfg.embed_dim = v;
    }
    if let Some(v) = a.hidden_dim {
        cfg.hidden_dim = v;
    }
    if let Some(v) = a.tie_embeddings {
        cfg.tie_embeddings = v;
    }
    if let Some(v) = a.input_transform {
        cfg.input_transform = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.patience {
        cfg.patience = v;
    }
    if let Some(v) = a.integrator {
        cfg.integrator.method = v;
    }
    if let Some(v) = a.mc_samples {
        cfg.integrator.mc_samples = v;
    }
    if let Some(v) = a.knots_per_interval {
        cfg.integrator.knots_per_interval = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.max_wall_seconds {
        cfg.max_wall_seconds = Some(v);
    }
    cfg.validate()?;
    let sweep = a.sweep_dims.clone().or(file_sweep);

    let start = a.init.as_deref().map(load_checkpoint).transpose()?.map(|c| c.model);
    let ds = load_data(&a.data, start.as_ref().map(|m| m.num_types()))?;
    let train = ds.split(Split::Train);
    let val = ds.split(Split::Val);
    if val.is_empty() {
        log::warn!("no validation sequences; the last epoch is kept");
    }
    let mut config_echo = serde_json::to_value(&cfg)?;
    if let Some(dims) = &sweep {
        config_echo["sweep_dims"] = json!(dims);
    }
    let prov = provenance(
        "fit",
        config_echo,
        json!({
            "data": path_str(&a.data),
            "init": a.init.as_deref().map(path_str),
        }),
    );

    if let Some(dims) = &sweep {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Config("sweep_dims must be a nonempty list of positive sizes".into()));
        }
        let points = sweep_dims(&train, &val, ds.num_types(), &cfg, dims)?;
        let out = a
            .sweep_out
            .as_deref()
            .ok_or_else(|| Error::Config("a dimension sweep needs --sweep-out".into()))?;
        let file = create(out)?;
        write_sweep_csv(&points, file)?;
        write_sidecar(out, &prov)?;
        for p in &points {
            log::info!("D={}: best val LL {:.6} at epoch {}", p.embed_dim, p.val_ll, p.best_epoch);
        }
        return Ok(());
    }

    let res = fit(&train, &val, ds.num_types(), &cfg, start)?;
    let out = a.out.as_deref().ok_or_else(|| Error::Config("fit needs --out".into()))?;
    let mut ckpt_prov = prov.clone();
    ckpt_prov["result"] = json!({
        "best_epoch": res.best_epoch,
        "best_val_ll": finite_or_null(res.best_val_ll),
        "epochs_run": res.epochs_run,
        "stopped_early": res.stopped_early,
    });
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_checkpoint(&Checkpoint::new(res.best_model, ckpt_prov), out)?;
    if let Some(log_path) = &a.log {
        if let Some(dir) = log_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        save_log_csv(&res.log, log_path)?;
        write_sidecar(log_path, &prov)?;
    }
    log::info!(
        "best val LL {:.6} at epoch {} of {}; checkpoint {}",
        res.best_val_ll,
        res.best_epoch,
        res.epochs_run,
        out.display()
    );
    Ok(())
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

struct EvalRun {
    report: crate::predict::EvalReport,
    rows: Vec<crate::predict::PredictionRow>,
    provenance: Value,
}

fn run_eval(o: &EvalOptions, command: &str) -> Result<EvalRun> {
    let mut cfg: EvalConfig = read_config(o.config.as_deref())?;
    if let Some(v) = o.h_mult {
        cfg.prediction.h_mult = v;
    }
    if let Some(v) = o.quad_steps {
        cfg.prediction.quad_steps = v;
    }
    if let Some(v) = o.include_first {
        cfg.prediction.include_first = v;
    }
    if let Some(v) = o.knots_per_interval {
        cfg.integrator.knots_per_interval = v;
    }
    let ckpt = load_checkpoint(&o.checkpoint)?;
    let model = &ckpt.model;
    let ds = load_data(&o.data, Some(model.num_types()))?;
    let seqs = ds.split(o.split);
    let train = ds.split(Split::Train);
    let gap_source = if train.is_empty() {
        log::warn!("no training split; the prediction horizon uses the evaluated split's mean gap");
        &seqs
    } else {
        &train
    };
    let mean_gap = crate::data::stats_of(gap_source.iter().copied(), ds.num_types())
        .mean_gap
        .ok_or_else(|| Error::InvalidArgument("no sequence with two or more events to set the mean gap".into()))?;
    let (report, rows) = evaluate(model, &seqs, mean_gap, &cfg.prediction, &cfg.integrator)?;
    let prov = provenance(
        command,
        serde_json::to_value(&cfg)?,
        json!({
            "checkpoint": path_str(&o.checkpoint),
            "checkpoint_provenance": ckpt.provenance,
            "data": path_str(&o.data),
            "split": o.split.as_str(),
        }),
    );
    Ok(EvalRun {
        report,
        rows,
        provenance: prov,
    })
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let run = run_eval(&a.opts, "eval")?;
    write_json(&a.out, &json!({ "report": run.report, "provenance": run.provenance }))?;
    if let Some(p) = &a.predictions {
        let file = create(p)?;
        crate::predict::write_predictions_csv(&run.rows, file)?;
        write_sidecar(p, &run.provenance)?;
    }
    let r = &run.report;
    log::info!(
        "LL per event {:.6}, time RMSE {:.6}, type error rate {:.4} over {} predictions",
        r.ll_per_event,
        r.time_rmse,
        r.type_error_rate,
        r.num_predictions
    );
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let run = run_eval(&a.opts, "predict")?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_predictions_csv(&run.rows, &a.out)?;
    write_sidecar(&a.out, &run.provenance)?;
    log::info!("wrote {} predictions to {}", run.rows.len(), a.out.display());
    Ok(())
}

fn vocab_for(path: Option<&Path>, num_types: usize) -> Result<Vec<String>> {
    match path {
        Some(p) => load_vocab(p, num_types),
        None => Ok(default_vocab(num_types)),
    }
}

fn cmd_impact(a: &ImpactArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let model = &ckpt.model;
    let summary = cumulative_impact(model, a.horizon, a.steps)?;
    let labels = vocab_for(a.vocab.as_deref(), model.num_types())?;
    let matrix = LabeledMatrix::new(summary.matrix, labels.clone(), labels)?;
    let prov = provenance(
        "impact",
        json!({ "horizon": a.horizon, "steps": a.steps }),
        json!({
            "checkpoint": path_str(&a.checkpoint),
            "checkpoint_provenance": ckpt.provenance,
            "vocab": a.vocab.as_deref().map(path_str),
        }),
    );
    let file = create(&a.out)?;
    matrix.write_csv(file)?;
    write_sidecar(&a.out, &prov)?;
    if let Some(p) = &a.json {
        write_json(
            p,
            &json!({ "horizon": a.horizon, "steps": a.steps, "matrix": matrix, "provenance": prov }),
        )?;
    }
    if let Some(p) = &a.svg {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        save_heatmap_svg(&matrix, &format!("cumulative impact over [0, {}]", a.horizon), p)?;
        write_sidecar(p, &prov)?;
    }
    Ok(())
}

fn cmd_kernel_curve(a: &KernelCurveArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let curve = impact_curve(&ckpt.model, a.source, a.target, a.horizon, a.steps)?;
    let file = create(&a.out)?;
    write_curve_csv(&curve, file)?;
    let prov = provenance(
        "kernel-curve",
        json!({ "source": a.source, "target": a.target, "horizon": a.horizon, "steps": a.steps }),
        json!({
            "checkpoint": path_str(&a.checkpoint),
            "checkpoint_provenance": ckpt.provenance,
        }),
    );
    write_sidecar(&a.out, &prov)
}

fn cmd_topics(a: &TopicsArgs) -> Result<()> {
    if a.top_n == 0 {
        return Err(Error::Config("top_n must be positive".into()));
    }
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let model = &ckpt.model;
    let vocab = vocab_for(a.vocab.as_deref(), model.num_types())?;
    let topics = embedding_topics(model, &vocab, a.top_n);
    let prov = provenance(
        "topics",
        json!({ "top_n": a.top_n }),
        json!({
            "checkpoint": path_str(&a.checkpoint),
            "checkpoint_provenance": ckpt.provenance,
            "vocab": a.vocab.as_deref().map(path_str),
        }),
    );
    let file = create(&a.out)?;
    write_topics_csv(&topics, file)?;
    write_sidecar(&a.out, &prov)?;
    if let Some(p) = &a.json {
        write_json(p, &json!({ "topics": topics, "provenance": prov }))?;
    }
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<()> {
    let mut cfg: GradCheckConfig = read_config(a.config.as_deref())?;
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.num_models {
        cfg.num_models = v;
    }
    if let Some(v) = &a.embed_dims {
        cfg.embed_dims = v.clone();
    }
    if let Some(v) = &a.hidden_dims {
        cfg.hidden_dims = v.clone();
    }
    if let Some(v) = &a.type_counts {
        cfg.type_counts = v.clone();
    }
    cfg.corrupt = a.corrupt;
    let report = run_gradcheck(&cfg)?;
    println!(
        "gradcheck: {} models, {} coordinates ({} skipped at relu kinks), worst relative error {:.3e} (tolerance {:.1e}): {}",
        report.models_checked,
        report.coordinates_checked,
        report.kink_skipped,
        report.worst_relative_error(),
        report.tolerance,
        if report.passed { "PASS" } else { "FAIL" }
    );
    if let Some(w) = &report.worst {
        println!(
            "worst: model {} {}[{}] analytic {:.12e} numeric {:.12e}",
            w.model, w.tensor, w.index, w.analytic, w.numeric
        );
    }
    if let Some(p) = &a.out {
        let prov = provenance("gradcheck", serde_json::to_value(&cfg)?, json!({}));
        write_json(p, &json!({ "report": report, "provenance": prov }))?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(Error::GradCheck {
            worst: report.worst_relative_error(),
            tolerance: report.tolerance,
        })
    }
}
