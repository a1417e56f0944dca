use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::tensor::{Adam, LrSchedule};

/// Convolutional backbone: one stage per entry of `channels`. Each stage is
/// a strided 3×3 conv, `blocks[i]` residual blocks and, when enabled, a
/// global-context block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    pub channels: Vec<usize>,
    pub strides: Vec<usize>,
    pub blocks: Vec<usize>,
    pub global_context: bool,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        ModelConfig::desk().backbone
    }
}

impl BackboneConfig {
    pub fn total_stride(&self) -> usize {
        self.strides.iter().product()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub structure: f64,
    pub content: f64,
    pub bbox: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            structure: 1.0,
            content: 1.0,
            bbox: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// `(h, w, c)` of input images.
    pub image_size: (usize, usize, usize),
    pub d_model: usize,
    pub ff_size: usize,
    pub n_heads: usize,
    pub n_shared_layers: usize,
    /// Longest structure sequence including EOS.
    pub max_struct_len: usize,
    /// Longest cell character sequence including EOS.
    pub max_cell_len: usize,
    pub struct_vocab_size: usize,
    pub content_vocab_size: usize,
    pub backbone: BackboneConfig,
    pub loss_weights: LossWeights,
    pub optimizer: Adam,
    pub lr: LrSchedule,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// 160×160 grayscale input, 20×20 memory grid.
    pub fn desk() -> Self {
        Self {
            image_size: (160, 160, 1),
            d_model: 64,
            ff_size: 256,
            n_heads: 4,
            n_shared_layers: 2,
            max_struct_len: 160,
            max_cell_len: 12,
            struct_vocab_size: 32,
            content_vocab_size: 99,
            backbone: BackboneConfig {
                channels: vec![16, 32, 64],
                strides: vec![2, 2, 2],
                blocks: vec![0, 1, 1],
                global_context: true,
            },
            loss_weights: LossWeights::default(),
            optimizer: Adam::default(),
            lr: LrSchedule::default(),
        }
    }

    /// Published geometry: 480×480 RGB input, 60×60 grid, width 512.
    pub fn paper() -> Self {
        Self {
            image_size: (480, 480, 3),
            d_model: 512,
            ff_size: 2048,
            n_heads: 8,
            max_struct_len: 500,
            max_cell_len: 150,
            backbone: BackboneConfig {
                channels: vec![64, 128, 256, 512],
                strides: vec![2, 2, 2, 1],
                blocks: vec![1, 2, 5, 3],
                global_context: true,
            },
            ..Self::desk()
        }
    }

    /// Smallest useful network, for gradient checks.
    pub fn tiny() -> Self {
        Self {
            image_size: (16, 16, 1),
            d_model: 16,
            ff_size: 32,
            n_heads: 2,
            max_struct_len: 24,
            max_cell_len: 6,
            struct_vocab_size: 32,
            content_vocab_size: 24,
            backbone: BackboneConfig {
                channels: vec![4, 8],
                strides: vec![2, 2],
                blocks: vec![0, 1],
                global_context: true,
            },
            ..Self::desk()
        }
    }

    pub fn grid(&self) -> (usize, usize) {
        let s = self.backbone.total_stride();
        (self.image_size.0 / s, self.image_size.1 / s)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        let b = &self.backbone;
        let (h, w, c) = self.image_size;
        if h == 0 || w == 0 || c == 0 {
            return bad(format!(
                "image size {:?} has a zero extent",
                self.image_size
            ));
        }
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.ff_size == 0 || self.n_shared_layers == 0 {
            return bad("ff_size and n_shared_layers must be positive".into());
        }
        if b.channels.is_empty()
            || b.channels.len() != b.strides.len()
            || b.channels.len() != b.blocks.len()
        {
            return bad(
                "backbone channels, strides and blocks must be non-empty and equally long".into(),
            );
        }
        if b.channels.contains(&0) || b.strides.contains(&0) {
            return bad("backbone channels and strides must be positive".into());
        }
        let s = b.total_stride();
        if h % s != 0 || w % s != 0 {
            return bad(format!(
                "total stride {s} does not divide the image size {h}x{w}"
            ));
        }
        if self.max_struct_len < 2 || self.max_cell_len < 2 {
            return bad("max_struct_len and max_cell_len must be at least 2".into());
        }
        if self.struct_vocab_size < 5 || self.content_vocab_size < 5 {
            return bad("vocabularies need the four specials plus at least one token".into());
        }
        let lw = self.loss_weights;
        if [lw.structure, lw.content, lw.bbox]
            .iter()
            .any(|x| !x.is_finite() || *x < 0.0)
        {
            return bad("loss weights must be finite and non-negative".into());
        }
        Ok(())
    }

    /// Hidden width of the global-context bottleneck for `c` channels.
    pub fn gc_hidden(c: usize) -> usize {
        (c / 4).max(1)
    }

    /// Number of scalar parameters:
    ///
    /// - stage `i` (input width `p`, width `c`, `n` blocks):
    ///   `9pc + 2c + n(18c² + 4c) + [gc: 2cr + r + c]` with `r = max(c/4, 1)`
    /// - projection: `c_last·d + d`
    /// - full attention `A = 4d² + 4d`, value-only attention `2d² + 2d`
    /// - decoder layer `L = 2A + 6d + 2df + f + d`; the box layer has a
    ///   value-only self-attention, so `L_box = L - 2d² - 2d`
    /// - `N` shared layers plus one layer each for structure, box and content
    /// - embeddings `(V_s + V_c)·d`, outputs `dV_s + V_s + 4d + 4 + dV_c + V_c`
    pub fn param_count(&self) -> usize {
        let b = &self.backbone;
        let mut total = 0;
        let mut prev = self.image_size.2;
        for (i, &c) in b.channels.iter().enumerate() {
            total += 9 * prev * c + 2 * c + b.blocks[i] * (18 * c * c + 4 * c);
            if b.global_context {
                let r = Self::gc_hidden(c);
                total += 2 * c * r + r + c;
            }
            prev = c;
        }
        let (d, f) = (self.d_model, self.ff_size);
        let (vs, vc) = (self.struct_vocab_size, self.content_vocab_size);
        let attn = 4 * d * d + 4 * d;
        let layer = 2 * attn + 6 * d + 2 * d * f + f + d;
        total += prev * d + d;
        total += (self.n_shared_layers + 3) * layer - (2 * d * d + 2 * d);
        total += (vs + vc) * d;
        total += d * vs + vs + 4 * d + 4 + d * vc + vc;
        total
    }
}
