//! Teacher-forcing sequences and padded batches.

use super::Sample;
use crate::vocab::{ContentVocab, StructVocab, TableAnnotation, EOS_ID, PAD_ID, SOS_ID};

/// Sequence caps, counting the appended EOS.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeqLimits {
    pub max_struct_len: usize,
    pub max_cell_len: usize,
}

/// Supervision for one sample without padding.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    /// `SOS` followed by the structure ids.
    pub struct_in: Vec<usize>,
    /// Structure ids followed by `EOS`.
    pub struct_out: Vec<usize>,
    /// Positions `t` with a cell trigger at `struct_out[t]`, in cell order.
    pub triggers: Vec<usize>,
    pub cell_in: Vec<Vec<usize>>,
    pub cell_out: Vec<Vec<usize>>,
    /// `[x0, y0, x1, y1]` divided by the image width/height.
    pub bbox: Vec<[f32; 4]>,
    pub bbox_mask: Vec<bool>,
}

pub fn encode_annotation(
    ann: &TableAnnotation,
    svocab: &StructVocab,
    cvocab: &ContentVocab,
    limits: SeqLimits,
) -> Result<Encoded, String> {
    let ids = svocab.encode(&ann.structure_tokens);
    if ids.len() + 1 > limits.max_struct_len {
        return Err(format!(
            "{} structure tokens exceed the limit of {}",
            ids.len() + 1,
            limits.max_struct_len
        ));
    }
    let triggers: Vec<usize> = ids
        .iter()
        .enumerate()
        .filter(|(_, &id)| svocab.is_trigger_id(id))
        .map(|(t, _)| t)
        .collect();
    if triggers.len() != ann.cells.len() {
        return Err(format!(
            "{} cell tokens but {} cells",
            triggers.len(),
            ann.cells.len()
        ));
    }
    let (h, w, _) = ann.image_size;
    let mut enc = Encoded {
        struct_in: std::iter::once(SOS_ID).chain(ids.iter().copied()).collect(),
        struct_out: ids.iter().copied().chain(std::iter::once(EOS_ID)).collect(),
        triggers,
        cell_in: Vec::new(),
        cell_out: Vec::new(),
        bbox: Vec::new(),
        bbox_mask: Vec::new(),
    };
    for (i, cell) in ann.cells.iter().enumerate() {
        let chars = cvocab.encode(&cell.content_tokens);
        if chars.len() + 1 > limits.max_cell_len {
            return Err(format!(
                "cell {i} has {} characters, limit is {}",
                chars.len(),
                limits.max_cell_len - 1
            ));
        }
        enc.cell_in.push(
            std::iter::once(SOS_ID)
                .chain(chars.iter().copied())
                .collect(),
        );
        enc.cell_out
            .push(chars.into_iter().chain(std::iter::once(EOS_ID)).collect());
        match cell.bbox {
            Some([x0, y0, x1, y1]) if !cell.is_empty() => {
                let (w, h) = (w as f32, h as f32);
                enc.bbox
                    .push([x0 as f32 / w, y0 as f32 / h, x1 as f32 / w, y1 as f32 / h]);
                enc.bbox_mask.push(true);
            }
            _ => {
                enc.bbox.push([0.0; 4]);
                enc.bbox_mask.push(false);
            }
        }
    }
    Ok(enc)
}

/// Padded training batch. Images stay in the caller's sample list and are
/// referenced through `indices`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    /// `[B][T]`, PAD-padded.
    pub struct_in: Vec<Vec<usize>>,
    pub struct_out: Vec<Vec<usize>>,
    /// `[cells][L]` over all samples, PAD-padded.
    pub cell_in: Vec<Vec<usize>>,
    pub cell_out: Vec<Vec<usize>>,
    /// Per flattened cell: `(sample within batch, trigger position)`.
    pub cell_index: Vec<(usize, usize)>,
    pub bbox: Vec<[f32; 4]>,
    pub bbox_mask: Vec<bool>,
}

fn pad(seqs: &mut [Vec<usize>]) {
    let len = seqs.iter().map(Vec::len).max().unwrap_or(0);
    for s in seqs {
        s.resize(len, PAD_ID);
    }
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Builds a batch from already encoded samples.
    pub fn from_encoded(items: Vec<(usize, Encoded)>) -> Self {
        let mut b = Batch {
            indices: Vec::new(),
            struct_in: Vec::new(),
            struct_out: Vec::new(),
            cell_in: Vec::new(),
            cell_out: Vec::new(),
            cell_index: Vec::new(),
            bbox: Vec::new(),
            bbox_mask: Vec::new(),
        };
        for (k, (index, e)) in items.into_iter().enumerate() {
            b.indices.push(index);
            b.struct_in.push(e.struct_in);
            b.struct_out.push(e.struct_out);
            b.cell_index.extend(e.triggers.iter().map(|&t| (k, t)));
            b.cell_in.extend(e.cell_in);
            b.cell_out.extend(e.cell_out);
            b.bbox.extend(e.bbox);
            b.bbox_mask.extend(e.bbox_mask);
        }
        pad(&mut b.struct_in);
        pad(&mut b.struct_out);
        pad(&mut b.cell_in);
        pad(&mut b.cell_out);
        b
    }

    /// Unpadded view of sample `k`: its structure sequences trimmed at the
    /// first PAD and the range of its flattened cells.
    pub fn sample(&self, k: usize) -> (&[usize], &[usize], std::ops::Range<usize>) {
        let len = self.struct_out[k]
            .iter()
            .position(|&id| id == PAD_ID)
            .unwrap_or(self.struct_out[k].len());
        let start = self
            .cell_index
            .iter()
            .position(|&(s, _)| s == k)
            .unwrap_or(self.cell_index.len());
        let end = start
            + self.cell_index[start..]
                .iter()
                .take_while(|&&(s, _)| s == k)
                .count();
        (
            &self.struct_in[k][..len],
            &self.struct_out[k][..len],
            start..end,
        )
    }
}

/// Encodes and groups samples in order into batches of `batch_size`.
/// Samples that exceed the limits are skipped and reported with the reason.
pub fn batchify(
    samples: &[Sample],
    batch_size: usize,
    svocab: &StructVocab,
    cvocab: &ContentVocab,
    limits: SeqLimits,
) -> (Vec<Batch>, Vec<(usize, String)>) {
    let mut skipped = Vec::new();
    let mut encoded = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        match encode_annotation(&s.annotation, svocab, cvocab, limits) {
            Ok(e) => encoded.push((i, e)),
            Err(msg) => {
                log::warn!("skipping sample {i}: {msg}");
                skipped.push((i, msg));
            }
        }
    }
    let mut batches = Vec::new();
    let mut it = encoded.into_iter().peekable();
    while it.peek().is_some() {
        let chunk: Vec<(usize, Encoded)> = it.by_ref().take(batch_size.max(1)).collect();
        batches.push(Batch::from_encoded(chunk));
    }
    (batches, skipped)
}
