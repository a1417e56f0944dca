use serde::{Deserialize, Serialize};

use super::network::Forward;
use super::{Model, ModelError};
use crate::data::Batch;
use crate::tensor::{AdamState, Real, Tensor, Var};
use crate::vocab::PAD_ID;

/// Teacher-forcing supervision for one sample, without padding beyond what
/// is needed to stack its cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Targets {
    pub struct_in: Vec<usize>,
    pub struct_out: Vec<usize>,
    /// Trigger position of every cell.
    pub triggers: Vec<usize>,
    /// Equal-length right-shifted character sequences, PAD-padded.
    pub cell_in: Vec<Vec<usize>>,
    pub cell_out: Vec<Vec<usize>>,
    pub bbox: Vec<[f32; 4]>,
    pub bbox_mask: Vec<bool>,
}

/// Supervision of sample `k` of `batch`, trimmed to its own lengths.
pub fn sample_targets(batch: &Batch, k: usize) -> Targets {
    let (sin, sout, cells) = batch.sample(k);
    let len = batch.cell_out[cells.clone()]
        .iter()
        .map(|s| s.iter().position(|&id| id == PAD_ID).unwrap_or(s.len()))
        .max()
        .unwrap_or(0);
    Targets {
        struct_in: sin.to_vec(),
        struct_out: sout.to_vec(),
        triggers: batch.cell_index[cells.clone()]
            .iter()
            .map(|&(_, t)| t)
            .collect(),
        cell_in: batch.cell_in[cells.clone()]
            .iter()
            .map(|s| s[..len].to_vec())
            .collect(),
        cell_out: batch.cell_out[cells.clone()]
            .iter()
            .map(|s| s[..len].to_vec())
            .collect(),
        bbox: batch.bbox[cells.clone()].to_vec(),
        bbox_mask: batch.bbox_mask[cells].to_vec(),
    }
}

/// Scalar loss nodes on a tape.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub structure: Var,
    pub content: Var,
    pub bbox: Var,
}

/// Loss values for logging.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub structure: f64,
    pub content: f64,
    pub bbox: f64,
}

impl<T: Real> Forward<'_, T> {
    /// `λ₁·CE(structure) + λ₂·CE(content) + λ₃·L1(boxes)`. Content and box
    /// terms are absent (zero) for tables without cells; the box term
    /// averages over coordinates of masked-in cells only.
    #[allow(clippy::too_many_arguments)]
    pub fn total_loss(
        &mut self,
        struct_logits: Var,
        struct_targets: &[usize],
        bbox_pred: Option<Var>,
        bbox_targets: &[[f32; 4]],
        bbox_mask: &[bool],
        content_logits: Option<Var>,
        content_targets: &[usize],
    ) -> Result<LossVars, ModelError> {
        let w = self.model.config.loss_weights;
        let structure = self
            .tape
            .cross_entropy(struct_logits, struct_targets, PAD_ID)?;
        let zero = || Tensor::scalar(T::zero());
        let bbox = match bbox_pred {
            Some(pred) => {
                let rows = self.tape.shape(pred)[0];
                if rows != bbox_targets.len() || rows != bbox_mask.len() {
                    return Err(ModelError::Input(format!(
                        "{rows} box predictions for {} targets and {} mask entries",
                        bbox_targets.len(),
                        bbox_mask.len()
                    )));
                }
                let target = Tensor::new(
                    [rows, 4],
                    bbox_targets
                        .iter()
                        .flatten()
                        .map(|&v| T::of(v as f64))
                        .collect(),
                )?;
                let mask: Vec<bool> = bbox_mask.iter().flat_map(|&m| [m; 4]).collect();
                self.tape.l1_loss(pred, &target, &mask)?
            }
            None if bbox_targets.is_empty() => self.tape.constant(zero()),
            None => return Err(ModelError::Input("box targets without predictions".into())),
        };
        let content = match content_logits {
            Some(logits) => self.tape.cross_entropy(logits, content_targets, PAD_ID)?,
            None if content_targets.is_empty() => self.tape.constant(zero()),
            None => return Err(ModelError::Input("content targets without logits".into())),
        };
        let total = self.tape.weighted_sum(&[
            (structure, T::of(w.structure)),
            (content, T::of(w.content)),
            (bbox, T::of(w.bbox)),
        ])?;
        Ok(LossVars {
            total,
            structure,
            content,
            bbox,
        })
    }

    /// Teacher-forced forward pass of all three tasks for one sample.
    pub fn sample_loss(
        &mut self,
        image: &Tensor<f32>,
        t: &Targets,
    ) -> Result<LossVars, ModelError> {
        if t.struct_in.len() != t.struct_out.len() || t.triggers.len() != t.cell_in.len() {
            return Err(ModelError::Input("misaligned targets".into()));
        }
        let mem = self.encode(image)?;
        let hidden = self.shared_decode(&mem, &t.struct_in)?;
        let logits = self.structure_head(hidden, &mem)?;
        let (bbox, content) = if t.triggers.is_empty() {
            (None, None)
        } else {
            if let Some(&bad) = t.triggers.iter().find(|&&p| p >= t.struct_in.len()) {
                return Err(ModelError::Input(format!(
                    "trigger position {bad} beyond the sequence"
                )));
            }
            let cells = self.cell_hidden(hidden, &t.triggers)?;
            let bbox = self.bbox_head(cells, &mem)?;
            let content = self.content_decode(&mem, cells, &t.cell_in)?;
            (Some(bbox), Some(content))
        };
        let flat: Vec<usize> = t.cell_out.iter().flatten().copied().collect();
        self.total_loss(
            logits,
            &t.struct_out,
            bbox,
            &t.bbox,
            &t.bbox_mask,
            content,
            &flat,
        )
    }

    pub fn breakdown(&self, l: &LossVars) -> LossBreakdown {
        let v = |x: Var| self.tape.value(x).item().f64();
        LossBreakdown {
            total: v(l.total),
            structure: v(l.structure),
            content: v(l.content),
            bbox: v(l.bbox),
        }
    }
}

/// Gradients of the batch loss (mean of per-sample losses) for every
/// parameter, and the mean loss breakdown. Each sample gets its own tape;
/// contributions are summed in sample order.
pub fn batch_gradients<'a, T: Real>(
    model: &Model<T>,
    batch: &Batch,
    image: impl Fn(usize) -> &'a Tensor<f32>,
) -> Result<(Vec<Tensor<T>>, LossBreakdown), ModelError> {
    let n = batch.len();
    if n == 0 {
        return Err(ModelError::Input("empty batch".into()));
    }
    let mut grads: Vec<Tensor<T>> = model
        .params
        .tensors
        .iter()
        .map(|t| Tensor::zeros(t.shape().to_vec()))
        .collect();
    let mut mean = LossBreakdown::default();
    let inv = 1.0 / n as f64;
    for k in 0..n {
        let targets = sample_targets(batch, k);
        let mut f = model.forward();
        let loss = f.sample_loss(image(batch.indices[k]), &targets)?;
        let b = f.breakdown(&loss);
        mean.total += b.total * inv;
        mean.structure += b.structure * inv;
        mean.content += b.content * inv;
        mean.bbox += b.bbox * inv;
        let scaled = f.tape.scale(loss.total, T::of(inv));
        let mut g = f.tape.backward(scaled)?;
        for (acc, &p) in grads.iter_mut().zip(&f.params) {
            let gp = g.take(p);
            for (a, &x) in acc.data_mut().iter_mut().zip(gp.data()) {
                *a += x;
            }
        }
    }
    Ok((grads, mean))
}

/// One optimizer update on `batch`; returns the mean loss breakdown before
/// the update.
pub fn train_step<'a>(
    model: &mut Model<f32>,
    state: &mut AdamState<f32>,
    batch: &Batch,
    image: impl Fn(usize) -> &'a Tensor<f32>,
) -> Result<LossBreakdown, ModelError> {
    let (grads, breakdown) = batch_gradients(model, batch, image)?;
    let lr = model.config.lr.at(state.step);
    let opt = model.config.optimizer;
    opt.step(&mut model.params.tensors, &grads, state, lr);
    Ok(breakdown)
}
