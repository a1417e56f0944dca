//! Training loop with per-step logging, periodic checkpoints and a
//! validation hook that runs the same inference and scoring as the
//! `infer` and `eval` commands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{encode_annotation, Batch, NamedSample, Record, SeqLimits};
use crate::decoding::{recognize_table, DecodeOptions, TableResult};
use crate::eval::{evaluate, EvalReport};
use crate::model::{train_step, Checkpoint, Model, ModelError};
use crate::tensor::AdamState;
use crate::vocab::{ContentVocab, StructVocab};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> TrainError {
    TrainError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

/// Files written next to a checkpoint `dir/name.ckpt`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifacts {
    pub checkpoint: PathBuf,
    pub best: PathBuf,
    pub log: PathBuf,
    pub config: PathBuf,
    pub validation: PathBuf,
}

impl Artifacts {
    pub fn for_checkpoint(path: &Path) -> Self {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into());
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self {
            checkpoint: path.to_path_buf(),
            best: dir.join(format!("{stem}.best.ckpt")),
            log: dir.join(format!("{stem}.log.jsonl")),
            config: dir.join(format!("{stem}.config.json")),
            validation: dir.join(format!("{stem}.val.jsonl")),
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub epoch: usize,
    #[serde(rename = "L")]
    pub total: f64,
    #[serde(rename = "L_struc")]
    pub structure: f64,
    #[serde(rename = "L_cont")]
    pub content: f64,
    #[serde(rename = "L_bbox")]
    pub bbox: f64,
    pub lr: f64,
}

/// One line of the validation log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValLog {
    pub epoch: usize,
    pub step: u64,
    pub count: usize,
    pub teds: Option<f64>,
    pub teds_struct: Option<f64>,
    pub map: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model<f32>,
    pub steps: u64,
    pub epochs: usize,
    pub losses: Vec<StepLog>,
    pub best_teds_struct: Option<f64>,
    pub last_validation: Option<EvalReport>,
    pub skipped: Vec<(usize, String)>,
}

/// Runs inference on every sample, naming each result after its file.
pub fn predict(
    model: &Model<f32>,
    samples: &[NamedSample],
) -> Result<Vec<TableResult>, ModelError> {
    samples
        .iter()
        .map(|s| {
            let (h, w, _) = s.sample.annotation.image_size;
            let mut r = recognize_table(model, &s.sample.image, (h, w), DecodeOptions::default())?;
            r.filename = s.filename.clone();
            Ok(r)
        })
        .collect()
}

/// Ground-truth records of loaded samples.
pub fn records(samples: &[NamedSample]) -> Vec<Record> {
    samples
        .iter()
        .map(|s| Record::new(s.filename.clone(), s.split.clone(), &s.sample.annotation))
        .collect()
}

/// Inference plus scoring, as the validation hook runs it.
pub fn validate(
    model: &Model<f32>,
    samples: &[NamedSample],
    cfg: &RunConfig,
) -> Result<(EvalReport, Vec<TableResult>), ModelError> {
    let preds = predict(model, samples)?;
    let report = evaluate(
        &preds,
        &records(samples),
        &cfg.eval.metrics,
        cfg.eval.iou_threshold,
    );
    Ok((report, preds))
}

fn write_line<W: Write>(w: &mut W, path: &Path, value: &impl Serialize) -> Result<(), TrainError> {
    let line = serde_json::to_string(value).map_err(|e| io_err(path, e))?;
    writeln!(w, "{line}")
        .and_then(|_| w.flush())
        .map_err(|e| io_err(path, e))
}

/// Trains from the seed in `cfg.training`. Writes the resolved config, the
/// step log, the validation log, the latest checkpoint at `checkpoint` and
/// the best-by-TEDS-struct checkpoint beside it.
pub fn train(
    cfg: &RunConfig,
    train_set: &[NamedSample],
    val_set: Option<&[NamedSample]>,
    checkpoint: &Path,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()
        .map_err(|e| TrainError::Setup(e.to_string()))?;
    let svocab = StructVocab::default();
    let cvocab = ContentVocab::default();
    let mc = &cfg.model;
    if mc.struct_vocab_size != svocab.len() || mc.content_vocab_size != cvocab.len() {
        return Err(TrainError::Setup(format!(
            "vocabulary sizes must be {} (structure) and {} (content)",
            svocab.len(),
            cvocab.len()
        )));
    }
    let paths = Artifacts::for_checkpoint(checkpoint);
    if let Some(dir) = checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(&paths.config, cfg.to_json()).map_err(|e| io_err(&paths.config, e))?;
    let open = |p: &Path| {
        File::create(p)
            .map(BufWriter::new)
            .map_err(|e| io_err(p, e))
    };
    let mut log = open(&paths.log)?;
    let mut val_log = open(&paths.validation)?;

    let limits = SeqLimits {
        max_struct_len: mc.max_struct_len,
        max_cell_len: mc.max_cell_len,
    };
    let mut encoded = Vec::new();
    let mut skipped = Vec::new();
    for (i, s) in train_set.iter().enumerate() {
        if s.sample.image.shape() != [mc.image_size.0, mc.image_size.1, mc.image_size.2] {
            skipped.push((
                i,
                format!(
                    "image shape {:?} does not match the model",
                    s.sample.image.shape()
                ),
            ));
            continue;
        }
        match encode_annotation(&s.sample.annotation, &svocab, &cvocab, limits) {
            Ok(e) => encoded.push((i, e)),
            Err(msg) => skipped.push((i, msg)),
        }
    }
    for (i, msg) in &skipped {
        log::warn!("skipping training sample {i}: {msg}");
    }
    if encoded.is_empty() {
        return Err(TrainError::Setup("no usable training samples".into()));
    }
    let val_samples: &[NamedSample] = val_set.unwrap_or(train_set);
    let val_samples = &val_samples[..cfg
        .training
        .val_limit
        .unwrap_or(usize::MAX)
        .min(val_samples.len())];

    let tc = &cfg.training;
    let mut model = Model::<f32>::new(mc.clone(), tc.seed)?;
    let mut state = AdamState::for_params(&model.params.tensors);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(tc.seed ^ 0x005e_ed0f_da7a);
    let started = Instant::now();
    let mut outcome_losses = Vec::new();
    let mut best: Option<f64> = None;
    let mut last_validation = None;
    let mut epochs_run = 0;
    for epoch in 1..=tc.epochs {
        if tc.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        for chunk in order.chunks(tc.batch_size) {
            let batch = Batch::from_encoded(chunk.iter().map(|&k| encoded[k].clone()).collect());
            let lr = model.config.lr.at(state.step);
            let b = train_step(&mut model, &mut state, &batch, |i| {
                &train_set[i].sample.image
            })?;
            let entry = StepLog {
                step: state.step,
                epoch,
                total: b.total,
                structure: b.structure,
                content: b.content,
                bbox: b.bbox,
                lr,
            };
            write_line(&mut log, &paths.log, &entry)?;
            outcome_losses.push(entry);
        }
        epochs_run = epoch;
        let last = epoch == tc.epochs;
        let out_of_time = tc
            .time_limit_secs
            .is_some_and(|t| started.elapsed().as_secs() >= t);
        let save_now =
            last || out_of_time || (tc.checkpoint_every > 0 && epoch % tc.checkpoint_every == 0);
        let ckpt = Checkpoint::new(&model, state.clone(), state.step, tc.seed);
        if save_now {
            ckpt.save(&paths.checkpoint)?;
        }
        let validate_now =
            last || out_of_time || (tc.validate_every > 0 && epoch % tc.validate_every == 0);
        let mut reached = false;
        if validate_now {
            let (report, _) = validate(&model, val_samples, cfg)?;
            log::info!(
                "epoch {epoch}: loss {:.4}, val TEDS {:?}, TEDS-struct {:?}, mAP {:?}",
                outcome_losses
                    .last()
                    .map(|l: &StepLog| l.total)
                    .unwrap_or(f64::NAN),
                report.teds,
                report.teds_struct,
                report.map
            );
            write_line(
                &mut val_log,
                &paths.validation,
                &ValLog {
                    epoch,
                    step: state.step,
                    count: report.count,
                    teds: report.teds,
                    teds_struct: report.teds_struct,
                    map: report.map,
                },
            )?;
            if let Some(ts) = report.teds_struct {
                if best.is_none_or(|b| ts > b) {
                    best = Some(ts);
                    ckpt.save(&paths.best)?;
                }
            }
            let met = |target: Option<f64>, value: Option<f64>| match (target, value) {
                (None, _) => true,
                (Some(t), Some(v)) => v >= t,
                (Some(_), None) => false,
            };
            reached = (tc.target_val_teds.is_some() || tc.target_val_teds_struct.is_some())
                && met(tc.target_val_teds, report.teds)
                && met(tc.target_val_teds_struct, report.teds_struct);
            last_validation = Some(report);
        }
        if reached || out_of_time {
            if !save_now {
                ckpt.save(&paths.checkpoint)?;
            }
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        steps: state.step,
        epochs: epochs_run,
        losses: outcome_losses,
        best_teds_struct: best,
        last_validation,
        skipped,
    })
}
