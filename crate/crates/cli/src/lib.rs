//! Command-line front end: `gen-data`, `train`, `infer` and `eval`.
//!
//! Failures print one JSON line `{"error": kind, "exit": code, "message": ...}`
//! to stderr. Exit codes: 0 success, 1 usage or config error, 2 data-format
//! error, 3 runtime failure.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use tabrec::config::{ConfigError, RunConfig};
use tabrec::data::{
    self, load_dataset, load_image, read_records, GenConfig, LoadOptions, NamedSample,
};
use tabrec::decoding::{overlay, recognize_table, DecodeOptions, TableResult};
use tabrec::eval::{evaluate, Metric};
use tabrec::model::{Checkpoint, Model, ModelError};
use tabrec::train::{self, predict, TrainError};

#[derive(Debug, Parser)]
#[command(name = "tabrec", version, about = "Table recognition from images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Profile {
    Desk,
    PaperGeometry,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generator profile; ignored when --config supplies one.
        #[arg(long, value_enum, default_value = "desk")]
        profile: Profile,
        /// Run config whose data section selects the generator.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Train a model and write checkpoints and logs next to --out.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training data; overrides the config's data.train.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Validation data; overrides the config's data.val.
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recognize tables. --image takes a PNG, a dataset directory or an
    /// annotation JSONL; datasets produce one result per line.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Write an overlay PNG (single image) or a directory of them.
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score predictions against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        /// Annotation JSONL or dataset directory.
        #[arg(long)]
        gt: PathBuf,
        /// Metrics to compute; all when absent.
        #[arg(long, value_parser = parse_metric)]
        metric: Vec<Metric>,
        #[arg(long)]
        iou: Option<f64>,
        /// Run config whose eval section supplies defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    Metric::parse(s).ok_or_else(|| format!("unknown metric {s:?} (teds, teds-struct, map)"))
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => 1,
            Self::Format(_) => 2,
            Self::Runtime(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Config(_) => "config",
            Self::Format(_) => "data",
            Self::Runtime(_) => "runtime",
        }
    }
}

impl From<data::DataError> for CliError {
    fn from(e: data::DataError) -> Self {
        Self::Format(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => Self::Usage(e.to_string()),
            ModelError::Checkpoint(_) | ModelError::Io { .. } => Self::Format(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Setup(_) => Self::Usage(e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Io { .. } => Self::Runtime(e.to_string()),
        }
    }
}

fn runtime(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ")
                .to_string();
            report(&CliError::Usage(first));
            return 1;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            e.exit_code()
        }
    }
}

fn report(e: &CliError) {
    eprintln!(
        "{}",
        json!({"error": e.kind(), "exit": e.exit_code(), "message": e.to_string()})
    );
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenData {
            out,
            count,
            seed,
            profile,
            config,
            split,
        } => gen_data(&out, count, seed, profile, config.as_deref(), &split),
        Command::Train {
            config,
            data,
            val,
            out,
        } => train_cmd(config.as_deref(), data, val, &out),
        Command::Infer {
            ckpt,
            image,
            overlay,
            output,
        } => infer(&ckpt, &image, overlay.as_deref(), output.as_deref()),
        Command::Eval {
            pred,
            gt,
            metric,
            iou,
            config,
            output,
        } => eval_cmd(
            &pred,
            &gt,
            metric,
            iou,
            config.as_deref(),
            output.as_deref(),
        ),
    }
}

fn write_output(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| runtime(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Runtime(e.to_string()))
        }
    }
}

fn gen_data(
    out: &Path,
    count: usize,
    seed: u64,
    profile: Profile,
    config: Option<&Path>,
    split: &str,
) -> Result<(), CliError> {
    let cfg = match config {
        Some(p) => RunConfig::load(p)?.data.gen_config()?,
        None => match profile {
            Profile::Desk => GenConfig::desk(),
            Profile::PaperGeometry => GenConfig::paper_geometry(),
        },
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let samples = data::generate(&cfg, count, seed)?;
    data::write_dataset(&samples, out, split).map_err(|e| CliError::Runtime(e.to_string()))?;
    let record = json!({"generator": cfg, "count": count, "seed": seed, "split": split});
    let path = out.join("generator.json");
    let text = serde_json::to_string_pretty(&record).map_err(|e| runtime(&path, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| runtime(&path, e))?;
    log::info!("wrote {count} samples to {}", out.display());
    Ok(())
}

fn load_for_model(
    path: &Path,
    model: &tabrec::model::ModelConfig,
) -> Result<Vec<NamedSample>, CliError> {
    let (h, w, c) = model.image_size;
    let loaded = load_dataset(
        path,
        LoadOptions {
            channels: c,
            resize: Some((h, w)),
        },
    )?;
    for (line, msg) in &loaded.skipped {
        log::warn!("{}: line {line} skipped: {msg}", path.display());
    }
    Ok(loaded.samples)
}

fn train_cmd(
    config: Option<&Path>,
    data: Option<PathBuf>,
    val: Option<PathBuf>,
    out: &Path,
) -> Result<(), CliError> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if data.is_some() {
        cfg.data.train = data;
    }
    if val.is_some() {
        cfg.data.val = val;
    }
    cfg.validate()?;
    let train_path =
        cfg.data.train.clone().ok_or_else(|| {
            CliError::Usage("no training data: pass --data or set data.train".into())
        })?;
    let train_set = load_for_model(&train_path, &cfg.model)?;
    let val_set = match &cfg.data.val {
        Some(p) => Some(load_for_model(p, &cfg.model)?),
        None => None,
    };
    let outcome = train::train(&cfg, &train_set, val_set.as_deref(), out)?;
    let summary = json!({
        "steps": outcome.steps,
        "epochs": outcome.epochs,
        "final_loss": outcome.losses.last().map(|l| l.total),
        "best_teds_struct": outcome.best_teds_struct,
        "teds": outcome.last_validation.as_ref().and_then(|r| r.teds),
        "teds_struct": outcome.last_validation.as_ref().and_then(|r| r.teds_struct),
        "map": outcome.last_validation.as_ref().and_then(|r| r.map),
        "skipped": outcome.skipped.len(),
    });
    write_output(None, &format!("{summary}\n"))
}

fn is_dataset(path: &Path) -> bool {
    path.is_dir() || path.extension().is_some_and(|e| e == "jsonl")
}

fn infer(
    ckpt: &Path,
    image: &Path,
    overlay_path: Option<&Path>,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let model: Model<f32> = Checkpoint::load(ckpt)?.model()?;
    let (h, w, c) = model.config.image_size;
    if is_dataset(image) {
        let samples = load_for_model(image, &model.config)?;
        let results = predict(&model, &samples)?;
        if let Some(dir) = overlay_path {
            std::fs::create_dir_all(dir).map_err(|e| runtime(dir, e))?;
            for (s, r) in samples.iter().zip(&results) {
                let (oh, ow, _) = s.sample.annotation.image_size;
                let p = dir.join(&s.filename);
                overlay(&s.sample.image, r, (oh, ow))
                    .save(&p)
                    .map_err(|e| runtime(&p, e))?;
            }
        }
        let mut text = String::new();
        for r in &results {
            text += &serde_json::to_string(r).map_err(|e| CliError::Runtime(e.to_string()))?;
            text.push('\n');
        }
        return write_output(output, &text);
    }
    let (tensor, original) = load_image(
        image,
        LoadOptions {
            channels: c,
            resize: Some((h, w)),
        },
    )?;
    let mut result = recognize_table(&model, &tensor, original, DecodeOptions::default())?;
    result.filename = image
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    if let Some(p) = overlay_path {
        overlay(&tensor, &result, original)
            .save(p)
            .map_err(|e| runtime(p, e))?;
    }
    let line = serde_json::to_string(&result).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_output(output, &(line + "\n"))
}

/// Reads TableResult records, one JSON object per line.
pub fn read_predictions(path: &Path) -> Result<Vec<TableResult>, CliError> {
    let file =
        File::open(path).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line)
            .map_err(|e| CliError::Format(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

fn eval_cmd(
    pred: &Path,
    gt: &Path,
    metrics: Vec<Metric>,
    iou: Option<f64>,
    config: Option<&Path>,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let ecfg = match config {
        Some(p) => RunConfig::load(p)?.eval,
        None => Default::default(),
    };
    let metrics = if metrics.is_empty() {
        ecfg.metrics
    } else {
        metrics
    };
    let iou = iou.unwrap_or(ecfg.iou_threshold);
    if !(iou > 0.0 && iou <= 1.0) {
        return Err(CliError::Usage(format!(
            "IoU threshold {iou} must lie in (0, 1]"
        )));
    }
    let preds = read_predictions(pred)?;
    let (records, skipped) = read_records(gt)?;
    if let Some((line, msg)) = skipped.first() {
        return Err(CliError::Format(format!(
            "{}: line {line}: {msg}",
            gt.display()
        )));
    }
    let records: Vec<_> = records.into_iter().map(|(_, r)| r).collect();
    let report = evaluate(&preds, &records, &metrics, iou);
    let text =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_output(output, &(text + "\n"))
}
