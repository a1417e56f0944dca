//! Synthetic table generation and PubTabNet-format ingestion.

mod batch;
pub mod font;
mod io;
mod render;
mod spec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use batch::{batchify, encode_annotation, Batch, Encoded, SeqLimits};
pub use io::{
    load_dataset, load_image, parse_record, read_records, save_png, write_dataset, CellRecord,
    HtmlRecord, LoadOptions, Loaded, NamedSample, Record, StructureRecord, ANNOTATIONS, IMAGES,
};
pub use render::{render, MARGIN};
pub use spec::{sample_table_spec, GenConfig, LineStyle, SpecCell, TableSpec};

use crate::tensor::Tensor;
use crate::vocab::TableAnnotation;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum DataError {
    #[error("invalid table: {0}")]
    Spec(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

/// An `h×w×c` image in [0, 1] with its annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Tensor<f32>,
    pub annotation: TableAnnotation,
}

/// Sample `index` of the stream identified by `seed`. Each index draws from
/// its own ChaCha stream, so samples are independent of generation order.
pub fn generate_sample(cfg: &GenConfig, seed: u64, index: u64) -> Result<Sample, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let spec = sample_table_spec(&mut rng, cfg);
    render(&spec, cfg.image_h, cfg.image_w, cfg.channels)
}

/// `count` samples from the stream identified by `seed`.
pub fn generate(cfg: &GenConfig, count: usize, seed: u64) -> Result<Vec<Sample>, DataError> {
    cfg.validate().map_err(DataError::Spec)?;
    (0..count as u64)
        .map(|i| generate_sample(cfg, seed, i))
        .collect()
}
