//! Random inputs and teacher-forcing targets for model tests.

use rand::Rng;
use tabrec::model::{ModelConfig, Targets};
use tabrec::tensor::Tensor;
use tabrec::vocab::{StructVocab, CELL, EOS_ID, PAD_ID, SOS_ID};

pub fn random_image<R: Rng>(rng: &mut R, cfg: &ModelConfig) -> Tensor<f32> {
    let (h, w, c) = cfg.image_size;
    Tensor::new(
        [h, w, c],
        (0..h * w * c).map(|_| rng.gen::<f32>()).collect(),
    )
    .unwrap()
}

/// Targets for a structure sequence of `len` outputs (the last one EOS)
/// with `cells` triggers and character sequences padded to `cell_len`.
pub fn random_targets<R: Rng>(
    rng: &mut R,
    cfg: &ModelConfig,
    len: usize,
    cells: usize,
    cell_len: usize,
) -> Targets {
    assert!(cells < len && len <= cfg.max_struct_len && cell_len <= cfg.max_cell_len);
    let svocab = StructVocab::default();
    let trigger = svocab.id(CELL).unwrap();
    let mut struct_out: Vec<usize> = (0..len - 1)
        .map(|_| loop {
            let id = rng.gen_range(4..cfg.struct_vocab_size);
            if !svocab.is_trigger_id(id) {
                break id;
            }
        })
        .collect();
    let mut positions: Vec<usize> = (0..len - 1).collect();
    for i in 0..cells {
        let j = rng.gen_range(i..positions.len());
        positions.swap(i, j);
    }
    let mut triggers = positions[..cells].to_vec();
    triggers.sort_unstable();
    for &t in &triggers {
        struct_out[t] = trigger;
    }
    struct_out.push(EOS_ID);
    let mut struct_in = vec![SOS_ID];
    struct_in.extend_from_slice(&struct_out[..len - 1]);
    let mut cell_in = Vec::new();
    let mut cell_out = Vec::new();
    let mut bbox = Vec::new();
    let mut bbox_mask = Vec::new();
    for c in 0..cells {
        let chars = if c == 0 {
            cell_len - 1
        } else {
            rng.gen_range(0..cell_len)
        };
        let mut out: Vec<usize> = (0..chars)
            .map(|_| rng.gen_range(4..cfg.content_vocab_size))
            .collect();
        out.push(EOS_ID);
        out.resize(cell_len, PAD_ID);
        let mut inp = vec![SOS_ID];
        inp.extend_from_slice(&out[..cell_len - 1]);
        cell_in.push(inp);
        cell_out.push(out);
        let (x0, y0) = (rng.gen_range(0.0..0.5f32), rng.gen_range(0.0..0.5f32));
        bbox.push([
            x0,
            y0,
            x0 + rng.gen_range(0.05..0.5f32),
            y0 + rng.gen_range(0.05..0.5f32),
        ]);
        bbox_mask.push(chars > 0);
    }
    Targets {
        struct_in,
        struct_out,
        triggers,
        cell_in,
        cell_out,
        bbox,
        bbox_mask,
    }
}

/// A small model over the built-in vocabularies, cheap enough for many
/// full decodes.
pub fn small_config() -> ModelConfig {
    let mut cfg = ModelConfig::desk();
    cfg.image_size = (32, 32, 1);
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.ff_size = 32;
    cfg.n_shared_layers = 1;
    cfg.max_struct_len = 40;
    cfg.max_cell_len = 6;
    cfg.backbone = tabrec::model::BackboneConfig {
        channels: vec![4, 8],
        strides: vec![2, 2],
        blocks: vec![0, 1],
        global_context: true,
    };
    cfg
}
