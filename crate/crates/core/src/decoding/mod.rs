//! Greedy inference: structure tokens first, then a box and a character
//! sequence for every emitted cell trigger, spliced into HTML.

mod repair;

use serde::{Deserialize, Serialize};

pub use repair::repair_structure;

use crate::eval::Detection;
use crate::model::{Forward, Memory, Model, ModelError};
use crate::tensor::{Real, Tensor};
use crate::vocab::{assemble_html, ContentVocab, StructVocab, EOS_ID, PAD_ID, SOS_ID, UNK_ID};

/// Decoding options. Only greedy search (`beam_width == 1`) is implemented.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub beam_width: usize,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self { beam_width: 1 }
    }
}

/// Greedy structure decode.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureDecode<T> {
    /// Emitted ids without the final EOS.
    pub ids: Vec<usize>,
    /// Shared-decoder state `[ids.len(), d_model]` at the step that emitted
    /// each id.
    pub hidden: Option<Tensor<T>>,
    /// Softmax probability of each emitted id.
    pub probs: Vec<f64>,
    /// True when the length cap was hit before EOS.
    pub truncated: bool,
}

/// Index and probability of the most likely token, never PAD, SOS or UNK.
/// Ties go to the lowest id.
fn pick<T: Real>(row: &[T]) -> (usize, f64) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.f64()));
    let total: f64 = row.iter().map(|v| (v.f64() - max).exp()).sum();
    let mut best = (EOS_ID, f64::NEG_INFINITY);
    for (i, v) in row.iter().enumerate() {
        if matches!(i, PAD_ID | SOS_ID | UNK_ID) {
            continue;
        }
        if v.f64() > best.1 {
            best = (i, v.f64());
        }
    }
    (best.0, (best.1 - max).exp() / total)
}

fn last_row<T: Real>(t: &Tensor<T>, row: usize) -> &[T] {
    let cols = t.shape()[1];
    &t.data()[row * cols..(row + 1) * cols]
}

/// Greedy structure decoding from SOS until EOS or `max_struct_len` steps.
pub fn decode_structure<T: Real>(
    f: &mut Forward<'_, T>,
    mem: &Memory,
) -> Result<StructureDecode<T>, ModelError> {
    let cfg = &f.model.config;
    let (limit, d) = (cfg.max_struct_len, cfg.d_model);
    let mut out = StructureDecode {
        ids: Vec::new(),
        hidden: None,
        probs: Vec::new(),
        truncated: true,
    };
    let mut rows: Vec<T> = Vec::new();
    let mut cache = f.structure_cache();
    let mut prev = SOS_ID;
    let mark = f.tape.len();
    for _ in 0..limit {
        let (hidden, logits) = f.structure_step(mem, &mut cache, prev)?;
        let (id, p) = pick(f.tape.value(logits).data());
        if id != EOS_ID {
            rows.extend_from_slice(f.tape.value(hidden).data());
        }
        f.tape.truncate(mark);
        if id == EOS_ID {
            out.truncated = false;
            break;
        }
        out.ids.push(id);
        out.probs.push(p);
        prev = id;
    }
    if !out.ids.is_empty() {
        out.hidden = Some(Tensor::new([out.ids.len(), d], rows)?);
    }
    Ok(out)
}

/// Normalized box and content ids of one decoded cell.
pub type DecodedCell = ([f64; 4], Vec<usize>);

/// A box (normalized `x0, y0, x1, y1`, ordered) and character ids per cell,
/// from the shared-decoder states at the trigger steps.
pub fn decode_cells<T: Real>(
    f: &mut Forward<'_, T>,
    mem: &Memory,
    cell_hidden: &Tensor<T>,
) -> Result<Vec<DecodedCell>, ModelError> {
    let cells = cell_hidden.shape()[0];
    let limit = f.model.config.max_cell_len;
    let mark = f.tape.len();
    let h = f.tape.constant(cell_hidden.clone());
    let boxes = f.bbox_head(h, mem)?;
    let boxes: Vec<[f64; 4]> = f
        .tape
        .value(boxes)
        .data()
        .chunks(4)
        .map(|b| {
            let (x0, x1) = (b[0].f64().min(b[2].f64()), b[0].f64().max(b[2].f64()));
            let (y0, y1) = (b[1].f64().min(b[3].f64()), b[1].f64().max(b[3].f64()));
            [x0, y0, x1, y1]
        })
        .collect();
    let mut prev = vec![SOS_ID; cells];
    let mut chars = vec![Vec::new(); cells];
    let mut done = vec![false; cells];
    let mut cache = f.content_cache(cells);
    let inner = f.tape.len();
    for _ in 0..limit {
        let logits = f.content_step(mem, h, &mut cache, &prev)?;
        let value = f.tape.value(logits);
        for c in 0..cells {
            prev[c] = if done[c] {
                PAD_ID
            } else {
                let (id, _) = pick(last_row(value, c));
                if id == EOS_ID {
                    done[c] = true;
                    PAD_ID
                } else {
                    chars[c].push(id);
                    id
                }
            };
        }
        f.tape.truncate(inner);
        if done.iter().all(|&x| x) {
            break;
        }
    }
    f.tape.truncate(mark);
    Ok(boxes.into_iter().zip(chars).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub content: String,
    /// `[x0, y0, x1, y1]` in pixels of the original image.
    pub bbox: [f64; 4],
    /// Structure probability of the cell's trigger token.
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableResult {
    pub filename: String,
    pub html: String,
    /// Repaired structure tokens; cells follow their triggers in order.
    pub structure_tokens: Vec<String>,
    pub cells: Vec<CellResult>,
    /// Tokens exactly as decoded, with their probabilities.
    pub emitted_tokens: Vec<String>,
    pub structure_probs: Vec<f64>,
    pub truncated: bool,
    /// Tokens dropped, inserted or rewritten to make the structure well formed.
    pub repairs: usize,
}

impl TableResult {
    pub fn detections(&self) -> Vec<Detection> {
        self.cells
            .iter()
            .map(|c| Detection {
                bbox: c.bbox,
                confidence: c.confidence,
            })
            .collect()
    }
}

/// Full inference on one image already resized to the model input. Boxes
/// are scaled to `original` `(h, w)`.
pub fn recognize_table(
    model: &Model<f32>,
    image: &Tensor<f32>,
    original: (usize, usize),
    opts: DecodeOptions,
) -> Result<TableResult, ModelError> {
    if opts.beam_width != 1 {
        return Err(ModelError::Config(format!(
            "beam width {} is not supported",
            opts.beam_width
        )));
    }
    let svocab = StructVocab::default();
    let cvocab = ContentVocab::default();
    if model.config.struct_vocab_size != svocab.len()
        || model.config.content_vocab_size != cvocab.len()
    {
        return Err(ModelError::Config(
            "model vocabulary sizes differ from the built-in vocabularies".into(),
        ));
    }
    let mut f = model.inference();
    let mem = f.encode(image)?;
    let s = decode_structure(&mut f, &mem)?;
    let emitted: Vec<String> = s
        .ids
        .iter()
        .map(|&i| svocab.token(i).unwrap_or("").to_string())
        .collect();
    let triggers: Vec<usize> = (0..s.ids.len())
        .filter(|&t| svocab.is_trigger_id(s.ids[t]))
        .collect();
    let mut cells = Vec::new();
    if let Some(hidden) = &s.hidden {
        if !triggers.is_empty() {
            let d = hidden.shape()[1];
            let rows: Vec<f32> = triggers
                .iter()
                .flat_map(|&t| hidden.row(t).iter().copied())
                .collect();
            let cell_hidden = Tensor::new([triggers.len(), d], rows)?;
            let (h, w) = (original.0 as f64, original.1 as f64);
            for (&t, (b, ids)) in triggers
                .iter()
                .zip(decode_cells(&mut f, &mem, &cell_hidden)?)
            {
                cells.push(CellResult {
                    content: cvocab.decode(&ids),
                    bbox: [b[0] * w, b[1] * h, b[2] * w, b[3] * h],
                    confidence: s.probs[t],
                });
            }
        }
    }
    let (structure_tokens, repairs) = repair_structure(&emitted);
    let contents: Vec<&str> = cells.iter().map(|c| c.content.as_str()).collect();
    let html = assemble_html(&structure_tokens, &contents)
        .map_err(|e| ModelError::Input(e.to_string()))?;
    Ok(TableResult {
        filename: String::new(),
        html,
        structure_tokens,
        cells,
        emitted_tokens: emitted,
        structure_probs: s.probs,
        truncated: s.truncated,
        repairs,
    })
}

/// The input image as RGB with every cell box outlined in red.
pub fn overlay(
    image: &Tensor<f32>,
    result: &TableResult,
    original: (usize, usize),
) -> image::RgbImage {
    let (h, w, c) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let mut out = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let base = (y as usize * w + x as usize) * c;
        let px =
            |k: usize| (image.data()[base + k.min(c - 1)].clamp(0.0, 1.0) * 255.0).round() as u8;
        image::Rgb([px(0), px(1), px(2)])
    });
    let (sy, sx) = (h as f64 / original.0 as f64, w as f64 / original.1 as f64);
    for cell in &result.cells {
        let [x0, y0, x1, y1] = cell.bbox;
        let clampx = |v: f64| ((v * sx).round().max(0.0) as u32).min(w as u32 - 1);
        let clampy = |v: f64| ((v * sy).round().max(0.0) as u32).min(h as u32 - 1);
        let (x0, x1, y0, y1) = (clampx(x0), clampx(x1), clampy(y0), clampy(y1));
        for x in x0..=x1 {
            out.put_pixel(x, y0, image::Rgb([255, 0, 0]));
            out.put_pixel(x, y1, image::Rgb([255, 0, 0]));
        }
        for y in y0..=y1 {
            out.put_pixel(x0, y, image::Rgb([255, 0, 0]));
            out.put_pixel(x1, y, image::Rgb([255, 0, 0]));
        }
    }
    out
}
