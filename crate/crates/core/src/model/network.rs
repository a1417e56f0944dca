//! Parameter layout and differentiable forward pass.

use super::config::ModelConfig;
use super::params::{Builder, Init};
use super::{Model, ModelError};
use crate::tensor::{Real, Tape, Tensor, Var};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug)]
struct Linear {
    w: usize,
    b: usize,
}

impl Linear {
    fn new(p: &mut Builder, name: &str, i: usize, o: usize) -> Self {
        Self {
            w: p.add(format!("{name}.weight"), &[i, o], Init::Normal),
            b: p.add(format!("{name}.bias"), &[o], Init::Zeros),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Norm {
    g: usize,
    b: usize,
}

impl Norm {
    fn new(p: &mut Builder, name: &str, c: usize) -> Self {
        Self {
            g: p.add(format!("{name}.gain"), &[c], Init::Ones),
            b: p.add(format!("{name}.bias"), &[c], Init::Zeros),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Attention {
    /// Absent for single-position self-attention, where the softmax weight is
    /// identically 1 and queries/keys have no effect.
    qk: Option<(Linear, Linear)>,
    v: Linear,
    o: Linear,
}

impl Attention {
    fn new(p: &mut Builder, name: &str, d: usize, value_only: bool) -> Self {
        let qk = (!value_only).then(|| {
            (
                Linear::new(p, &format!("{name}.q"), d, d),
                Linear::new(p, &format!("{name}.k"), d, d),
            )
        });
        Self {
            qk,
            v: Linear::new(p, &format!("{name}.v"), d, d),
            o: Linear::new(p, &format!("{name}.o"), d, d),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Layer {
    self_attn: Attention,
    norm1: Norm,
    cross: Attention,
    norm2: Norm,
    ff1: Linear,
    ff2: Linear,
    norm3: Norm,
}

impl Layer {
    fn new(p: &mut Builder, name: &str, d: usize, f: usize, single_position: bool) -> Self {
        Self {
            self_attn: Attention::new(p, &format!("{name}.self_attn"), d, single_position),
            norm1: Norm::new(p, &format!("{name}.norm1"), d),
            cross: Attention::new(p, &format!("{name}.cross_attn"), d, false),
            norm2: Norm::new(p, &format!("{name}.norm2"), d),
            ff1: Linear::new(p, &format!("{name}.ff1"), d, f),
            ff2: Linear::new(p, &format!("{name}.ff2"), f, d),
            norm3: Norm::new(p, &format!("{name}.norm3"), d),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvNorm {
    kernel: usize,
    norm: Norm,
}

impl ConvNorm {
    fn new(p: &mut Builder, name: &str, cin: usize, cout: usize) -> Self {
        Self {
            kernel: p.add(format!("{name}.kernel"), &[3, 3, cin, cout], Init::Normal),
            norm: Norm::new(p, &format!("{name}.norm"), cout),
        }
    }
}

#[derive(Clone, Debug)]
struct Stage {
    stride: usize,
    down: ConvNorm,
    blocks: Vec<(ConvNorm, ConvNorm)>,
    gc: Option<(Linear, Linear)>,
}

/// Indices of every parameter, grouped by component.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    stages: Vec<Stage>,
    proj: Linear,
    struct_emb: usize,
    shared: Vec<Layer>,
    struct_layer: Layer,
    struct_out: Linear,
    bbox_layer: Layer,
    bbox_out: Linear,
    content_emb: usize,
    content_layer: Layer,
    content_out: Linear,
}

impl Layout {
    pub fn build(cfg: &ModelConfig) -> (Self, Builder) {
        let mut p = Builder::default();
        let b = &cfg.backbone;
        let (d, f) = (cfg.d_model, cfg.ff_size);
        let mut stages = Vec::new();
        let mut prev = cfg.image_size.2;
        for (i, &c) in b.channels.iter().enumerate() {
            let name = format!("encoder.stage{i}");
            let down = ConvNorm::new(&mut p, &format!("{name}.down"), prev, c);
            let blocks = (0..b.blocks[i])
                .map(|j| {
                    (
                        ConvNorm::new(&mut p, &format!("{name}.block{j}.a"), c, c),
                        ConvNorm::new(&mut p, &format!("{name}.block{j}.b"), c, c),
                    )
                })
                .collect();
            let gc = b.global_context.then(|| {
                let r = ModelConfig::gc_hidden(c);
                (
                    Linear::new(&mut p, &format!("{name}.gc.reduce"), c, r),
                    Linear::new(&mut p, &format!("{name}.gc.expand"), r, c),
                )
            });
            stages.push(Stage {
                stride: b.strides[i],
                down,
                blocks,
                gc,
            });
            prev = c;
        }
        let proj = Linear::new(&mut p, "encoder.proj", prev, d);
        let struct_emb = p.add(
            "structure.embedding",
            &[cfg.struct_vocab_size, d],
            Init::Normal,
        );
        let shared = (0..cfg.n_shared_layers)
            .map(|i| Layer::new(&mut p, &format!("shared.layer{i}"), d, f, false))
            .collect();
        let struct_layer = Layer::new(&mut p, "structure.layer", d, f, false);
        let struct_out = Linear::new(&mut p, "structure.out", d, cfg.struct_vocab_size);
        let bbox_layer = Layer::new(&mut p, "bbox.layer", d, f, true);
        let bbox_out = Linear::new(&mut p, "bbox.out", d, 4);
        let content_emb = p.add(
            "content.embedding",
            &[cfg.content_vocab_size, d],
            Init::Normal,
        );
        let content_layer = Layer::new(&mut p, "content.layer", d, f, false);
        let content_out = Linear::new(&mut p, "content.out", d, cfg.content_vocab_size);
        let layout = Self {
            stages,
            proj,
            struct_emb,
            shared,
            struct_layer,
            struct_out,
            bbox_layer,
            bbox_out,
            content_emb,
            content_layer,
            content_out,
        };
        (layout, p)
    }

    /// Every decoder layer in memory-projection order.
    fn layers(&self) -> Vec<&Layer> {
        let mut v: Vec<&Layer> = self.shared.iter().collect();
        v.extend([&self.struct_layer, &self.bbox_layer, &self.content_layer]);
        v
    }

    /// Indices of encoder parameters.
    pub fn encoder_params(&self) -> Vec<usize> {
        let mut v = Vec::new();
        for s in &self.stages {
            v.extend([s.down.kernel, s.down.norm.g, s.down.norm.b]);
            for (a, b) in &s.blocks {
                v.extend([a.kernel, a.norm.g, a.norm.b, b.kernel, b.norm.g, b.norm.b]);
            }
            if let Some((r, e)) = s.gc {
                v.extend([r.w, r.b, e.w, e.b]);
            }
        }
        v.extend([self.proj.w, self.proj.b]);
        v
    }
}

/// Sinusoidal position table `[len, d]`.
pub fn positional_encoding<T: Real>(len: usize, d: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(len * d);
    for pos in 0..len {
        for i in 0..d {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let a = pos as f64 / rate;
            data.push(T::of(if i % 2 == 0 { a.sin() } else { a.cos() }));
        }
    }
    Tensor::new([len, d], data).expect("positive extents")
}

/// Encoded image: the flattened feature grid plus per-layer key/value
/// projections of it.
#[derive(Clone, Debug)]
pub struct Memory {
    /// `[h'·w', d_model]`, column-major over the grid, position-encoded.
    pub seq: Var,
    pub grid: (usize, usize),
    kv: Vec<(Var, Var)>,
}

/// Self-attention keys and values of the positions decoded so far, for
/// incremental decoding of `groups` parallel sequences.
#[derive(Clone, Debug)]
pub struct KvCache<T> {
    groups: usize,
    len: usize,
    /// `[slot][key or value][group·head]` → `len·d_head` values.
    slots: Vec<[Vec<Vec<T>>; 2]>,
}

impl<T: Real> KvCache<T> {
    fn new(slots: usize, groups: usize, heads: usize) -> Self {
        let empty = || vec![Vec::new(); groups * heads];
        Self {
            groups,
            len: 0,
            slots: (0..slots).map(|_| [empty(), empty()]).collect(),
        }
    }

    /// Positions decoded so far.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// A model bound to a fresh tape: every parameter is a leaf of the tape.
pub struct Forward<'m, T: Real> {
    pub model: &'m Model<T>,
    pub tape: Tape<T>,
    pub params: Vec<Var>,
}

type R<T = Var> = Result<T, ModelError>;

impl<'m, T: Real> Forward<'m, T> {
    pub(crate) fn new(model: &'m Model<T>, trainable: bool) -> Self {
        let mut tape = Tape::new();
        let params = model
            .params
            .tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), trainable))
            .collect();
        Self {
            model,
            tape,
            params,
        }
    }

    fn cfg(&self) -> &ModelConfig {
        &self.model.config
    }

    fn p(&self, i: usize) -> Var {
        self.params[i]
    }

    fn linear(&mut self, l: Linear, x: Var) -> R {
        let y = self.tape.matmul(x, self.p(l.w))?;
        Ok(self.tape.add_row(y, self.p(l.b))?)
    }

    fn norm(&mut self, n: Norm, x: Var) -> R {
        Ok(self.tape.layer_norm(x, self.p(n.g), self.p(n.b), LN_EPS)?)
    }

    fn conv_norm(&mut self, c: ConvNorm, x: Var, stride: usize) -> R {
        let y = self.tape.conv2d(x, self.p(c.kernel), stride, 1)?;
        self.norm(c.norm, y)
    }

    /// `[g·l, d]` → `[g·heads, l, d/heads]`.
    fn split_heads(&mut self, x: Var, groups: usize) -> R {
        let (rows, d) = (self.tape.shape(x)[0], self.tape.shape(x)[1]);
        let h = self.cfg().n_heads;
        let l = rows / groups;
        let y = self.tape.reshape(x, &[groups, l, h, d / h])?;
        let y = self.tape.permute(y, &[0, 2, 1, 3])?;
        Ok(self.tape.reshape(y, &[groups * h, l, d / h])?)
    }

    /// Inverse of [`Self::split_heads`].
    fn merge_heads(&mut self, x: Var, groups: usize) -> R {
        let s = self.tape.shape(x).to_vec();
        let h = s[0] / groups;
        let y = self.tape.reshape(x, &[groups, h, s[1], s[2]])?;
        let y = self.tape.permute(y, &[0, 2, 1, 3])?;
        Ok(self.tape.reshape(y, &[groups * s[1], h * s[2]])?)
    }

    fn attend(&mut self, q: Var, k: Var, v: Var, causal: bool) -> R {
        let dh = self.tape.shape(q)[2];
        let scores = self.tape.bmm(q, k, false, true)?;
        let scores = self.tape.scale(scores, T::of(1.0 / (dh as f64).sqrt()));
        let weights = if causal {
            self.tape.causal_softmax(scores)?
        } else {
            self.tape.softmax(scores, 2)?
        };
        Ok(self.tape.bmm(weights, v, false, false)?)
    }

    /// Causal self-attention within each of `groups` equal-length sequences
    /// stacked in `x`.
    fn self_attention(&mut self, a: Attention, x: Var, groups: usize) -> R {
        let Some((lq, lk)) = a.qk else {
            let v = self.linear(a.v, x)?;
            return self.linear(a.o, v);
        };
        let q = self.linear(lq, x)?;
        let k = self.linear(lk, x)?;
        let v = self.linear(a.v, x)?;
        let (q, k, v) = (
            self.split_heads(q, groups)?,
            self.split_heads(k, groups)?,
            self.split_heads(v, groups)?,
        );
        let ctx = self.attend(q, k, v, true)?;
        let ctx = self.merge_heads(ctx, groups)?;
        self.linear(a.o, ctx)
    }

    fn cross_attention(&mut self, a: Attention, x: Var, kv: (Var, Var)) -> R {
        let (lq, _) = a.qk.expect("cross-attention has queries");
        let q = self.linear(lq, x)?;
        let q = self.split_heads(q, 1)?;
        let ctx = self.attend(q, kv.0, kv.1, false)?;
        let ctx = self.merge_heads(ctx, 1)?;
        self.linear(a.o, ctx)
    }

    /// Post-norm decoder layer: self-attention, cross-attention, feed-forward.
    fn layer(&mut self, l: Layer, x: Var, groups: usize, kv: (Var, Var)) -> R {
        let a = self.self_attention(l.self_attn, x, groups)?;
        self.layer_tail(l, x, a, kv)
    }

    /// One new position per group attending to itself and the cached
    /// positions of layer `slot`; the new keys and values are appended.
    fn cached_layer(
        &mut self,
        l: Layer,
        x: Var,
        cache: &mut KvCache<T>,
        slot: usize,
        kv: (Var, Var),
    ) -> R {
        let (lq, lk) = l.self_attn.qk.expect("cached layers have queries");
        let (groups, h) = (cache.groups, self.cfg().n_heads);
        let d = self.tape.shape(x)[1];
        let dh = d / h;
        let q = self.linear(lq, x)?;
        let k = self.linear(lk, x)?;
        let v = self.linear(l.self_attn.v, x)?;
        let len = cache.len + 1;
        let mut stacked = [
            Vec::with_capacity(groups * h * len * dh),
            Vec::with_capacity(groups * h * len * dh),
        ];
        for (which, new) in [k, v].into_iter().enumerate() {
            let rows = self.tape.value(new).data().to_vec();
            let store = &mut cache.slots[slot][which];
            for (gh, buf) in store.iter_mut().enumerate() {
                let (g, head) = (gh / h, gh % h);
                buf.extend_from_slice(&rows[g * d + head * dh..g * d + (head + 1) * dh]);
                stacked[which].extend_from_slice(buf);
            }
        }
        let [ks, vs] = stacked;
        let ks = self.tape.constant(Tensor::new([groups * h, len, dh], ks)?);
        let vs = self.tape.constant(Tensor::new([groups * h, len, dh], vs)?);
        let q = self.split_heads(q, groups)?;
        let ctx = self.attend(q, ks, vs, false)?;
        let ctx = self.merge_heads(ctx, groups)?;
        let a = self.linear(l.self_attn.o, ctx)?;
        self.layer_tail(l, x, a, kv)
    }

    fn layer_tail(&mut self, l: Layer, x: Var, a: Var, kv: (Var, Var)) -> R {
        let x = self.tape.add(x, a)?;
        let x = self.norm(l.norm1, x)?;
        let c = self.cross_attention(l.cross, x, kv)?;
        let x = self.tape.add(x, c)?;
        let x = self.norm(l.norm2, x)?;
        let h = self.linear(l.ff1, x)?;
        let h = self.tape.relu(h);
        let h = self.linear(l.ff2, h)?;
        let x = self.tape.add(x, h)?;
        self.norm(l.norm3, x)
    }

    /// CNN backbone, column-major flattening, projection and position
    /// encoding; also projects the memory into keys/values for every layer.
    pub fn encode(&mut self, image: &Tensor<f32>) -> R<Memory> {
        let (h, w, c) = self.cfg().image_size;
        if image.shape() != [h, w, c] {
            return Err(ModelError::Input(format!(
                "image shape {:?} does not match the configured {:?}",
                image.shape(),
                [h, w, c]
            )));
        }
        let layout = &self.model.layout;
        // Ink intensity: blank paper maps to zero so that background patches
        // give no convolution response.
        let mut ink: Tensor<T> = image.cast();
        for v in ink.data_mut() {
            *v = T::one() - *v;
        }
        let mut x = self.tape.constant(ink);
        for stage in &layout.stages {
            x = self.conv_norm(stage.down, x, stage.stride)?;
            x = self.tape.relu(x);
            for &(a, b) in &stage.blocks {
                let y = self.conv_norm(a, x, 1)?;
                let y = self.tape.relu(y);
                let y = self.conv_norm(b, y, 1)?;
                let sum = self.tape.add(x, y)?;
                x = self.tape.relu(sum);
            }
            if let Some((reduce, expand)) = stage.gc {
                let s = self.tape.shape(x).to_vec();
                let flat = self.tape.reshape(x, &[s[0] * s[1], s[2]])?;
                let ctx = self.tape.mean_rows(flat)?;
                let ctx = self.tape.reshape(ctx, &[1, s[2]])?;
                let t = self.linear(reduce, ctx)?;
                let t = self.tape.relu(t);
                let t = self.linear(expand, t)?;
                let t = self.tape.reshape(t, &[s[2]])?;
                x = self.tape.add_row(x, t)?;
            }
        }
        let s = self.tape.shape(x).to_vec();
        let cols = self.tape.permute(x, &[1, 0, 2])?;
        let flat = self.tape.reshape(cols, &[s[0] * s[1], s[2]])?;
        let seq = self.linear(layout.proj, flat)?;
        let pe = self
            .tape
            .constant(positional_encoding(s[0] * s[1], self.cfg().d_model));
        let seq = self.tape.add(seq, pe)?;
        let mut kv = Vec::new();
        for l in layout.layers() {
            let (_, lk) = l.cross.qk.expect("cross-attention has keys");
            let k = self.linear(lk, seq)?;
            let v = self.linear(l.cross.v, seq)?;
            kv.push((self.split_heads(k, 1)?, self.split_heads(v, 1)?));
        }
        Ok(Memory {
            seq,
            grid: (s[0], s[1]),
            kv,
        })
    }

    fn check_ids(ids: &[usize], vocab: usize, limit: usize, what: &str) -> R<()> {
        if ids.is_empty() || ids.len() > limit {
            return Err(ModelError::Input(format!(
                "{what} length {} outside 1..={limit}",
                ids.len()
            )));
        }
        if let Some(bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(ModelError::Input(format!(
                "{what} id {bad} outside the vocabulary of {vocab}"
            )));
        }
        Ok(())
    }

    /// Embeds the right-shifted structure ids and runs the shared layers.
    /// Returns the hidden states `[T, d_model]`.
    pub fn shared_decode(&mut self, mem: &Memory, ids: &[usize]) -> R {
        let cfg = self.cfg();
        let (d, n) = (cfg.d_model, cfg.n_shared_layers);
        Self::check_ids(
            ids,
            cfg.struct_vocab_size,
            cfg.max_struct_len,
            "structure sequence",
        )?;
        let layout = &self.model.layout;
        let e = self.tape.gather_rows(self.p(layout.struct_emb), ids)?;
        let e = self.tape.scale(e, T::of((d as f64).sqrt()));
        let pe = self.tape.constant(positional_encoding(ids.len(), d));
        let mut x = self.tape.add(e, pe)?;
        for i in 0..n {
            x = self.layer(layout.shared[i], x, 1, mem.kv[i])?;
        }
        Ok(x)
    }

    /// Cache for [`Self::structure_step`]: the shared layers plus the
    /// structure layer.
    pub fn structure_cache(&self) -> KvCache<T> {
        KvCache::new(self.cfg().n_shared_layers + 1, 1, self.cfg().n_heads)
    }

    /// Cache for [`Self::content_step`] over `cells` sequences.
    pub fn content_cache(&self, cells: usize) -> KvCache<T> {
        KvCache::new(1, cells, self.cfg().n_heads)
    }

    /// Feeds structure id `id` at the next position. Returns the shared
    /// hidden row `[1, d_model]` and the structure logits `[1, vocab]`,
    /// equal up to rounding to the last rows of the full-sequence pass.
    pub fn structure_step(
        &mut self,
        mem: &Memory,
        cache: &mut KvCache<T>,
        id: usize,
    ) -> R<(Var, Var)> {
        let cfg = self.cfg();
        let (d, n) = (cfg.d_model, cfg.n_shared_layers);
        if cache.slots.len() != n + 1 || cache.groups != 1 {
            return Err(ModelError::Input(
                "cache was not made for structure decoding".into(),
            ));
        }
        Self::check_ids(
            &[id],
            cfg.struct_vocab_size,
            cfg.max_struct_len - cache.len,
            "structure sequence",
        )?;
        let layout = &self.model.layout;
        let x = self.step_input(layout.struct_emb, &[id], cache.len, d)?;
        let mut x = x;
        for i in 0..n {
            x = self.cached_layer(layout.shared[i], x, cache, i, mem.kv[i])?;
        }
        let y = self.cached_layer(layout.struct_layer, x, cache, n, mem.kv[n])?;
        let logits = self.linear(layout.struct_out, y)?;
        cache.len += 1;
        Ok((x, logits))
    }

    /// Feeds one character id per cell at the next position. Returns the
    /// logits `[cells, content_vocab_size]`.
    pub fn content_step(
        &mut self,
        mem: &Memory,
        cell_hidden: Var,
        cache: &mut KvCache<T>,
        ids: &[usize],
    ) -> R {
        let cfg = self.cfg();
        let (d, n) = (cfg.d_model, cfg.n_shared_layers);
        let cells = ids.len();
        if cache.slots.len() != 1
            || cache.groups != cells
            || self.tape.shape(cell_hidden)[0] != cells
        {
            return Err(ModelError::Input(format!(
                "{cells} character ids for a cache of {} cells",
                cache.groups
            )));
        }
        if cache.len >= cfg.max_cell_len {
            return Err(ModelError::Input(format!(
                "cell sequence length exceeds {}",
                cfg.max_cell_len
            )));
        }
        if let Some(bad) = ids.iter().find(|&&i| i >= cfg.content_vocab_size) {
            return Err(ModelError::Input(format!(
                "cell sequence id {bad} outside the vocabulary"
            )));
        }
        let layout = &self.model.layout;
        let x = self.step_input(layout.content_emb, ids, cache.len, d)?;
        let x = self.tape.add(x, cell_hidden)?;
        let x = self.cached_layer(layout.content_layer, x, cache, 0, mem.kv[n + 2])?;
        cache.len += 1;
        self.linear(layout.content_out, x)
    }

    /// Scaled embeddings of `ids` plus the position code of `pos`.
    fn step_input(&mut self, table: usize, ids: &[usize], pos: usize, d: usize) -> R {
        let e = self.tape.gather_rows(self.p(table), ids)?;
        let e = self.tape.scale(e, T::of((d as f64).sqrt()));
        let pe = positional_encoding::<T>(pos + 1, d);
        let row = &pe.data()[pos * d..];
        let tiled: Vec<T> = ids.iter().flat_map(|_| row.iter().copied()).collect();
        let pe = self.tape.constant(Tensor::new([ids.len(), d], tiled)?);
        Ok(self.tape.add(e, pe)?)
    }

    /// Structure logits `[T, struct_vocab_size]`.
    pub fn structure_head(&mut self, hidden: Var, mem: &Memory) -> R {
        let layout = &self.model.layout;
        let n = self.cfg().n_shared_layers;
        let x = self.layer(layout.struct_layer, hidden, 1, mem.kv[n])?;
        self.linear(layout.struct_out, x)
    }

    /// Rows of `hidden` at the given trigger positions.
    pub fn cell_hidden(&mut self, hidden: Var, positions: &[usize]) -> R {
        Ok(self.tape.gather_rows(hidden, positions)?)
    }

    /// Normalized boxes `[cells, 4]` as `(x0, y0, x1, y1)` in (0, 1). Each
    /// row of `cell_hidden` is an independent length-1 query.
    pub fn bbox_head(&mut self, cell_hidden: Var, mem: &Memory) -> R {
        let layout = &self.model.layout;
        let n = self.cfg().n_shared_layers;
        let x = self.layer(layout.bbox_layer, cell_hidden, 1, mem.kv[n + 1])?;
        let y = self.linear(layout.bbox_out, x)?;
        Ok(self.tape.sigmoid(y))
    }

    /// Character logits `[cells·L, content_vocab_size]` for `cells`
    /// right-shifted sequences of equal length `L`, each conditioned on its
    /// row of `cell_hidden`.
    pub fn content_decode<S: AsRef<[usize]>>(
        &mut self,
        mem: &Memory,
        cell_hidden: Var,
        ids: &[S],
    ) -> R {
        let cfg = self.cfg();
        let (d, n) = (cfg.d_model, cfg.n_shared_layers);
        let cells = ids.len();
        if cells == 0 || self.tape.shape(cell_hidden)[0] != cells {
            return Err(ModelError::Input(format!(
                "{cells} character sequences for {} cell states",
                self.tape.shape(cell_hidden)[0]
            )));
        }
        let len = ids[0].as_ref().len();
        let mut flat = Vec::with_capacity(cells * len);
        for s in ids {
            let s = s.as_ref();
            if s.len() != len {
                return Err(ModelError::Input(
                    "character sequences differ in length".into(),
                ));
            }
            Self::check_ids(s, cfg.content_vocab_size, cfg.max_cell_len, "cell sequence")?;
            flat.extend_from_slice(s);
        }
        let layout = &self.model.layout;
        let e = self.tape.gather_rows(self.p(layout.content_emb), &flat)?;
        let e = self.tape.scale(e, T::of((d as f64).sqrt()));
        let pe = positional_encoding::<T>(len, d);
        let tiled: Vec<T> = (0..cells).flat_map(|_| pe.data().iter().copied()).collect();
        let pe = self.tape.constant(Tensor::new([cells * len, d], tiled)?);
        let x = self.tape.add(e, pe)?;
        let rep: Vec<usize> = (0..cells)
            .flat_map(|c| std::iter::repeat_n(c, len))
            .collect();
        let cond = self.tape.gather_rows(cell_hidden, &rep)?;
        let x = self.tape.add(x, cond)?;
        let x = self.layer(layout.content_layer, x, cells, mem.kv[n + 2])?;
        self.linear(layout.content_out, x)
    }
}
