//! Dataset-level scoring of predictions against annotations.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{map_cell_detection, teds_trees, Detection};
use crate::data::Record;
use crate::decoding::TableResult;
use crate::vocab::{assemble_html, parse_table_tree, CELL_OPEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Teds,
    TedsStruct,
    Map,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Teds, Metric::TedsStruct, Metric::Map];

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "teds" => Some(Self::Teds),
            "teds-struct" => Some(Self::TedsStruct),
            "map" => Some(Self::Map),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub filename: String,
    pub complex: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teds_struct: Option<f64>,
    /// Why the sample scored zero, when it did so by failure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Mean scores over a subset of samples.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Subset {
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teds_struct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teds_struct: Option<f64>,
    /// Absent when not requested or when there are no ground-truth boxes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
    pub iou_threshold: f64,
    pub missing_predictions: usize,
    pub unparseable_predictions: usize,
    pub unparseable_ground_truth: usize,
    pub simple: Subset,
    pub complex: Subset,
    pub samples: Vec<SampleScore>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn subset(samples: &[&SampleScore]) -> Subset {
    Subset {
        count: samples.len(),
        teds: mean(samples.iter().filter_map(|s| s.teds)),
        teds_struct: mean(samples.iter().filter_map(|s| s.teds_struct)),
    }
}

/// Scores every ground-truth record against the prediction with the same
/// filename. A missing or unparseable prediction scores 0.
pub fn evaluate(
    predictions: &[TableResult],
    ground_truth: &[Record],
    metrics: &[Metric],
    iou_threshold: f64,
) -> EvalReport {
    let by_name: HashMap<&str, &TableResult> = predictions
        .iter()
        .map(|p| (p.filename.as_str(), p))
        .collect();
    let want = |m| metrics.contains(&m);
    let tree_metrics = want(Metric::Teds) || want(Metric::TedsStruct);
    let (mut missing, mut bad_pred, mut bad_gt) = (0, 0, 0);
    let mut samples = Vec::with_capacity(ground_truth.len());
    let mut dets = Vec::new();
    let mut gt_boxes = Vec::new();
    for rec in ground_truth {
        let pred = by_name.get(rec.filename.as_str()).copied();
        let complex = rec.html.structure.tokens.iter().any(|t| t == CELL_OPEN);
        let mut score = SampleScore {
            filename: rec.filename.clone(),
            complex,
            teds: None,
            teds_struct: None,
            error: None,
        };
        if want(Metric::Map) {
            gt_boxes.push(
                rec.html
                    .cells
                    .iter()
                    .filter(|c| !c.tokens.is_empty())
                    .filter_map(|c| c.bbox.map(|b| b.map(f64::from)))
                    .collect::<Vec<_>>(),
            );
            dets.push(pred.map(TableResult::detections).unwrap_or_default());
        }
        if tree_metrics {
            let contents: Vec<String> = rec.html.cells.iter().map(|c| c.tokens.concat()).collect();
            let gt_tree = assemble_html(&rec.html.structure.tokens, &contents)
                .and_then(|h| parse_table_tree(&h));
            match gt_tree {
                Err(e) => {
                    bad_gt += 1;
                    score.error = Some(format!("ground truth: {e}"));
                }
                Ok(gt) => {
                    let (full, structure) = match pred.map(|p| parse_table_tree(&p.html)) {
                        None => {
                            missing += 1;
                            score.error = Some("no prediction".into());
                            (0.0, 0.0)
                        }
                        Some(Err(e)) => {
                            bad_pred += 1;
                            score.error = Some(format!("prediction: {e}"));
                            (0.0, 0.0)
                        }
                        Some(Ok(p)) => {
                            let full = if want(Metric::Teds) {
                                teds_trees(&p, &gt)
                            } else {
                                0.0
                            };
                            let structure = if want(Metric::TedsStruct) {
                                teds_trees(&p.without_content(), &gt.without_content())
                            } else {
                                0.0
                            };
                            (full, structure)
                        }
                    };
                    score.teds = want(Metric::Teds).then_some(full);
                    score.teds_struct = want(Metric::TedsStruct).then_some(structure);
                }
            }
        } else if pred.is_none() {
            missing += 1;
        }
        samples.push(score);
    }
    let simple: Vec<&SampleScore> = samples.iter().filter(|s| !s.complex).collect();
    let complex: Vec<&SampleScore> = samples.iter().filter(|s| s.complex).collect();
    EvalReport {
        count: samples.len(),
        teds: mean(samples.iter().filter_map(|s| s.teds)),
        teds_struct: mean(samples.iter().filter_map(|s| s.teds_struct)),
        map: if want(Metric::Map) {
            map_cell_detection(&dets, &gt_boxes, iou_threshold)
        } else {
            None
        },
        iou_threshold,
        missing_predictions: missing,
        unparseable_predictions: bad_pred,
        unparseable_ground_truth: bad_gt,
        simple: subset(&simple),
        complex: subset(&complex),
        samples,
    }
}

/// Predictions as cell detections, for callers that score boxes directly.
pub fn detections(predictions: &[TableResult]) -> Vec<Vec<Detection>> {
    predictions.iter().map(TableResult::detections).collect()
}
