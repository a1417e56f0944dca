//! End-to-end multi-task table recognition.
//!
//! A table image is encoded by a small convolutional backbone into a
//! sequence of features. A shared transformer decoder feeds three heads that
//! predict the HTML structure tokens, a bounding box for every cell, and the
//! characters inside every cell. Whenever the structure head emits a cell
//! token, the box and content heads are run for that cell and the contents are
//! spliced back into the structure to form the final HTML.
//!
//! Modules:
//! - [`tensor`]: dense tensors with tape-based reverse-mode differentiation.
//! - [`vocab`]: structure/content vocabularies, tokenizers, HTML assembly and parsing.
//! - [`model`]: the network, its loss, checkpoints and a training step.
//! - [`decoding`]: greedy inference producing a [`decoding::TableResult`].
//! - [`data`]: synthetic table rendering, JSONL datasets and batching.
//! - [`eval`]: TEDS, TEDS-struct and cell-detection mAP.
//! - [`config`] and [`train`]: run configuration and the training loop.

pub mod config;
pub mod data;
pub mod decoding;
pub mod eval;
pub mod model;
pub mod tensor;
pub mod train;
pub mod vocab;
