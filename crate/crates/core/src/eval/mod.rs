//! Table recognition metrics: TEDS, TEDS-struct and cell-detection mAP.

mod map;
mod report;
mod ted;
mod teds;
mod tree;

pub use map::{iou, map_cell_detection, Detection};
pub use report::{detections, evaluate, EvalReport, Metric, SampleScore, Subset};
pub use ted::{tree_edit_distance, CostModel, TagCost};
pub use teds::{normalized_edit_distance, teds, teds_struct, teds_trees, TedsCost};
pub use tree::{TableNode, TableTree};

use crate::vocab::VocabError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("prediction does not parse: {0}")]
    Prediction(VocabError),
    #[error("ground truth does not parse: {0}")]
    GroundTruth(VocabError),
}
