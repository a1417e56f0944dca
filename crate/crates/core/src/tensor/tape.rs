use super::gemm::View;
use super::{Real, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
        batch: usize,
    },
    Add(Var, Var),
    Mul(Var, Var),
    AddRow {
        x: Var,
        row: Var,
    },
    Scale(Var, T),
    Relu(Var),
    Sigmoid(Var),
    Softmax {
        x: Var,
        axis: usize,
        causal: bool,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Conv2d {
        x: Var,
        kernel: Var,
        geom: ConvGeom,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        ignore: usize,
        probs: Vec<T>,
        count: usize,
    },
    L1 {
        pred: Var,
        target: Vec<T>,
        mask: Vec<bool>,
        count: usize,
    },
    Permute {
        x: Var,
        axes: Vec<usize>,
    },
    Reshape(Var),
    GatherRows {
        table: Var,
        ids: Vec<usize>,
    },
    MeanRows(Var),
    Sum(Var),
    WeightedSum(Vec<(Var, T)>),
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } | Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::AddRow { x, row } => vec![*x, *row],
            Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Op::Conv2d { x, kernel, .. } => vec![*x, *kernel],
            Op::Scale(x, _)
            | Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Reshape(x)
            | Op::MeanRows(x)
            | Op::Sum(x)
            | Op::Softmax { x, .. }
            | Op::Permute { x, .. } => vec![*x],
            Op::CrossEntropy { logits, .. } => vec![*logits],
            Op::L1 { pred, .. } => vec![*pred],
            Op::GatherRows { table, .. } => vec![*table],
            Op::WeightedSum(terms) => terms.iter().map(|t| t.0).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    /// Unfolds a channels-last `h×w×cin` input into `(ho·wo) × (kh·kw·cin)`.
    fn im2col<T: Real>(&self, x: &[T]) -> Vec<T> {
        let patch = self.kh * self.kw * self.cin;
        let mut cols = vec![T::zero(); self.ho * self.wo * patch];
        for oy in 0..self.ho {
            for ox in 0..self.wo {
                let base = (oy * self.wo + ox) * patch;
                for ky in 0..self.kh {
                    let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                    if iy < 0 || iy >= self.h as isize {
                        continue;
                    }
                    for kx in 0..self.kw {
                        let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                        if ix < 0 || ix >= self.w as isize {
                            continue;
                        }
                        let src = (iy as usize * self.w + ix as usize) * self.cin;
                        let dst = base + (ky * self.kw + kx) * self.cin;
                        cols[dst..dst + self.cin].copy_from_slice(&x[src..src + self.cin]);
                    }
                }
            }
        }
        cols
    }

    fn col2im<T: Real>(&self, cols: &[T], dx: &mut [T]) {
        let patch = self.kh * self.kw * self.cin;
        for oy in 0..self.ho {
            for ox in 0..self.wo {
                let base = (oy * self.wo + ox) * patch;
                for ky in 0..self.kh {
                    let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                    if iy < 0 || iy >= self.h as isize {
                        continue;
                    }
                    for kx in 0..self.kw {
                        let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                        if ix < 0 || ix >= self.w as isize {
                            continue;
                        }
                        let dst = (iy as usize * self.w + ix as usize) * self.cin;
                        let src = base + (ky * self.kw + kx) * self.cin;
                        for c in 0..self.cin {
                            dx[dst + c] += cols[src + c];
                        }
                    }
                }
            }
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records primitive operations for reverse-mode differentiation.
///
/// Every op reads its inputs' values and appends a new node; nothing already
/// on the tape is ever modified. A tape is single-threaded, but independent
/// tapes can be driven from different threads.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn row_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn invalid(op: &'static str, msg: impl Into<String>) -> TensorError {
    TensorError::Invalid {
        op,
        msg: msg.into(),
    }
}

fn permute_data<T: Real>(data: &[T], shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<T>) {
    let rank = shape.len();
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..data.len() {
        out.push(data[offset]);
        // odometer increment over the output index
        for d in (0..rank).rev() {
            idx[d] += 1;
            offset += strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    (out_shape, out)
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`. Vars created after
    /// that point become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an input value; gradients are tracked when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// `op(a)·op(b)` where `op` optionally transposes the stored matrix.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 {
            return Err(mismatch("matmul", sa, sb));
        }
        let (m, ka) = if ta { (sa[1], sa[0]) } else { (sa[0], sa[1]) };
        let (kb, n) = if tb { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if ka != kb {
            return Err(mismatch("matmul", sa, sb));
        }
        let (ar, ac, br, bc) = (sa[0], sa[1], sb[0], sb[1]);
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            ka,
            n,
            T::one(),
            View::of(self.value(a).data(), ar, ac, ta),
            View::of(self.value(b).data(), br, bc, tb),
            T::zero(),
            &mut out,
        );
        let value = Tensor::new([m, n], out)?;
        Ok(self.push(
            value,
            Op::MatMul {
                a,
                b,
                ta,
                tb,
                batch: 0,
            },
        ))
    }

    /// Batched matrix product over rank-3 tensors `[batch, rows, cols]`.
    pub fn bmm(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(mismatch("bmm", &sa, &sb));
        }
        let batch = sa[0];
        let (m, ka) = if ta { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
        let (kb, n) = if tb { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if ka != kb {
            return Err(mismatch("bmm", &sa, &sb));
        }
        let (asz, bsz) = (sa[1] * sa[2], sb[1] * sb[2]);
        let mut out = vec![T::zero(); batch * m * n];
        {
            let (ad, bd) = (self.value(a).data(), self.value(b).data());
            for i in 0..batch {
                T::gemm(
                    m,
                    ka,
                    n,
                    T::one(),
                    View::of(&ad[i * asz..(i + 1) * asz], sa[1], sa[2], ta),
                    View::of(&bd[i * bsz..(i + 1) * bsz], sb[1], sb[2], tb),
                    T::zero(),
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
        }
        let value = Tensor::new([batch, m, n], out)?;
        Ok(self.push(
            value,
            Op::MatMul {
                a,
                b,
                ta,
                tb,
                batch,
            },
        ))
    }

    fn zip(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch(op, va.shape(), vb.shape()));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(va.shape().to_vec(), data)
    }

    fn map(&self, x: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let v = self.value(x);
        Tensor {
            shape: v.shape().to_vec(),
            data: v.data().iter().map(|&e| f(e)).collect(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip("add", a, b, |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip("mul", a, b, |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// Adds a rank-1 `row` to every row of `x` along its last axis.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (sx, sr) = (self.shape(x), self.shape(row));
        let cols = *sx.last().unwrap_or(&1);
        if sr.len() != 1 || sr[0] != cols {
            return Err(mismatch("add_row", sx, sr));
        }
        let r = self.value(row).data().to_vec();
        let mut value = self.value(x).clone();
        for chunk in value.data_mut().chunks_mut(cols) {
            for (v, &b) in chunk.iter_mut().zip(&r) {
                *v += b;
            }
        }
        Ok(self.push(value, Op::AddRow { x, row }))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let value = self.map(x, |v| v * s);
        self.push(value, Op::Scale(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.map(x, |v| if v > T::zero() { v } else { T::zero() });
        self.push(value, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.map(x, |v| T::one() / (T::one() + (-v).exp()));
        self.push(value, Op::Sigmoid(x))
    }

    /// Softmax along `axis`, computed with max-subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.softmax_impl(x, axis, false)
    }

    /// Softmax over the last axis of a `[.., rows, cols]` score tensor where
    /// row `i` only sees columns `0..=i`; masked entries are exactly zero.
    pub fn causal_softmax(&mut self, x: Var) -> Result<Var> {
        let rank = self.shape(x).len();
        if rank < 2 {
            return Err(invalid("causal_softmax", "needs rank >= 2"));
        }
        self.softmax_impl(x, rank - 1, true)
    }

    fn softmax_impl(&mut self, x: Var, axis: usize, causal: bool) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(invalid(
                "softmax",
                format!("axis {axis} out of range for {shape:?}"),
            ));
        }
        let (outer, n, inner) = row_split(&shape, axis);
        let rows = if causal { shape[shape.len() - 2] } else { 1 };
        let src = self.value(x).data();
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            let limit = if causal { ((o % rows) + 1).min(n) } else { n };
            for i in 0..inner {
                let at = |j: usize| (o * n + j) * inner + i;
                let mut max = T::neg_infinity();
                for j in 0..limit {
                    max = max.max(src[at(j)]);
                }
                let mut sum = T::zero();
                for j in 0..limit {
                    let e = (src[at(j)] - max).exp();
                    out[at(j)] = e;
                    sum += e;
                }
                for j in 0..limit {
                    out[at(j)] = out[at(j)] / sum;
                }
            }
        }
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Softmax { x, axis, causal }))
    }

    /// Normalizes the last axis to zero mean and unit variance, then applies
    /// `gain·x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let cols = *shape
            .last()
            .ok_or_else(|| invalid("layer_norm", "rank-0 input"))?;
        for p in [gain, bias] {
            if self.shape(p) != [cols] {
                return Err(mismatch("layer_norm", &shape, self.shape(p)));
            }
        }
        let eps = T::of(eps);
        let n = T::of(cols as f64);
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let src = self.value(x).data();
        let rows = src.len() / cols;
        let mut xhat = vec![T::zero(); src.len()];
        let mut inv_std = vec![T::zero(); rows];
        let mut out = vec![T::zero(); src.len()];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            inv_std[r] = inv;
            for c in 0..cols {
                let h = (row[c] - mean) * inv;
                xhat[r * cols + c] = h;
                out[r * cols + c] = g[c] * h + b[c];
            }
        }
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    /// Cross-correlation of a channels-last `[h, w, c_in]` input with a
    /// `[kh, kw, c_in, c_out]` kernel.
    pub fn conv2d(&mut self, x: Var, kernel: Var, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(kernel).to_vec());
        if sx.len() != 3 || sk.len() != 4 || sk[2] != sx[2] {
            return Err(mismatch("conv2d", &sx, &sk));
        }
        if stride == 0 {
            return Err(invalid("conv2d", "stride must be positive"));
        }
        let (h, w, cin) = (sx[0], sx[1], sx[2]);
        let (kh, kw, cout) = (sk[0], sk[1], sk[3]);
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(invalid(
                "conv2d",
                format!("kernel {kh}x{kw} does not fit padded input {h}x{w} (pad {pad}): degenerate output"),
            ));
        }
        let geom = ConvGeom {
            h,
            w,
            cin,
            kh,
            kw,
            cout,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (w + 2 * pad - kw) / stride + 1,
        };
        let cols = geom.im2col(self.value(x).data());
        let patch = kh * kw * cin;
        let rows = geom.ho * geom.wo;
        let mut out = vec![T::zero(); rows * cout];
        T::gemm(
            rows,
            patch,
            cout,
            T::one(),
            View::new(&cols, rows, patch),
            View::new(self.value(kernel).data(), patch, cout),
            T::zero(),
            &mut out,
        );
        let value = Tensor::new([geom.ho, geom.wo, cout], out)?;
        Ok(self.push(value, Op::Conv2d { x, kernel, geom }))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `[n, classes]` logits. Rows whose target equals `ignore` are skipped;
    /// if every row is skipped the loss is 0 with zero gradient.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], ignore: usize) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != targets.len() {
            return Err(mismatch("cross_entropy", &shape, &[targets.len()]));
        }
        let classes = shape[1];
        if let Some(&bad) = targets.iter().find(|&&t| t >= classes && t != ignore) {
            return Err(invalid(
                "cross_entropy",
                format!("target {bad} outside [0, {classes})"),
            ));
        }
        let src = self.value(logits).data();
        let mut probs = vec![T::zero(); src.len()];
        let mut total = T::zero();
        let mut count = 0usize;
        for (r, &t) in targets.iter().enumerate() {
            if t == ignore {
                continue;
            }
            let row = &src[r * classes..(r + 1) * classes];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for (c, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                probs[r * classes + c] = e;
                sum += e;
            }
            for p in &mut probs[r * classes..(r + 1) * classes] {
                *p = *p / sum;
            }
            total += sum.ln() + max - row[t];
            count += 1;
        }
        let loss = if count == 0 {
            T::zero()
        } else {
            total / T::of(count as f64)
        };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                ignore,
                probs,
                count,
            },
        ))
    }

    /// Mean absolute deviation over elements where `mask` is set.
    pub fn l1_loss(&mut self, pred: Var, target: &Tensor<T>, mask: &[bool]) -> Result<Var> {
        let sp = self.shape(pred);
        if sp != target.shape() {
            return Err(mismatch("l1_loss", sp, target.shape()));
        }
        if mask.len() != target.numel() {
            return Err(mismatch("l1_loss", sp, &[mask.len()]));
        }
        let p = self.value(pred).data();
        let mut total = T::zero();
        let mut count = 0;
        for ((&a, &b), &m) in p.iter().zip(target.data()).zip(mask) {
            if m {
                total += (a - b).abs();
                count += 1;
            }
        }
        let loss = if count == 0 {
            T::zero()
        } else {
            total / T::of(count as f64)
        };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::L1 {
                pred,
                target: target.data().to_vec(),
                mask: mask.to_vec(),
                count,
            },
        ))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len()
            || axes
                .iter()
                .any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true))
        {
            return Err(invalid(
                "permute",
                format!("axes {axes:?} invalid for {shape:?}"),
            ));
        }
        let (out_shape, data) = permute_data(self.value(x).data(), &shape, axes);
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(
            value,
            Op::Permute {
                x,
                axes: axes.to_vec(),
            },
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshaped(shape.to_vec())?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Picks rows of a rank-2 `table` by index (embedding lookup, row selection
    /// and row repetition all use this).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let shape = self.shape(table).to_vec();
        if shape.len() != 2 {
            return Err(invalid(
                "gather_rows",
                format!("table must be rank 2, got {shape:?}"),
            ));
        }
        if ids.is_empty() {
            return Err(invalid("gather_rows", "no rows requested"));
        }
        let (rows, cols) = (shape[0], shape[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(invalid(
                "gather_rows",
                format!("row {bad} outside [0, {rows})"),
            ));
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            out.extend_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        let value = Tensor::new([ids.len(), cols], out)?;
        Ok(self.push(
            value,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Column means of a `[n, c]` tensor, returned with shape `[c]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(invalid(
                "mean_rows",
                format!("expected rank 2, got {shape:?}"),
            ));
        }
        let (rows, cols) = (shape[0], shape[1]);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c] += src[r * cols + c];
            }
        }
        let inv = T::one() / T::of(rows as f64);
        out.iter_mut().for_each(|v| *v *= inv);
        let value = Tensor::new([cols], out)?;
        Ok(self.push(value, Op::MeanRows(x)))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// `Σ weight·term` over scalar terms, accumulated in f64 and rounded
    /// once.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        if terms.is_empty() {
            return Err(invalid("weighted_sum", "no terms"));
        }
        let mut total = 0.0f64;
        for &(v, w) in terms {
            if self.value(v).numel() != 1 {
                return Err(invalid("weighted_sum", "terms must be scalars"));
            }
            total += self.value(v).data()[0].f64() * w.f64();
        }
        Ok(self.push(
            Tensor::scalar(T::of(total)),
            Op::WeightedSum(terms.to_vec()),
        ))
    }

    /// Reverse-mode accumulation from a scalar `loss`.
    ///
    /// Nodes are visited in strict reverse order of recording, so the result
    /// is deterministic for a given tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_shape = self.shape(loss);
        if loss_shape.iter().product::<usize>() != 1 {
            return Err(TensorError::NotScalar(loss_shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients {
            shapes: self
                .nodes
                .iter()
                .map(|n| n.value.shape().to_vec())
                .collect(),
            grads,
        })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> &'g mut [T] {
        let n = self.nodes[v.0].value.numel();
        grads[v.0].get_or_insert_with(|| vec![T::zero(); n])
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let val = |v: Var| self.nodes[v.0].value.data();
        macro_rules! acc {
            ($v:expr) => {
                self.slot(grads, $v)
            };
        }
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul {
                a,
                b,
                ta,
                tb,
                batch,
            } => {
                let (sa, sb) = (self.shape(a), self.shape(b));
                let (count, ar, ac, br, bc) = if batch == 0 {
                    (1, sa[0], sa[1], sb[0], sb[1])
                } else {
                    (batch, sa[1], sa[2], sb[1], sb[2])
                };
                let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
                let n = if tb { br } else { bc };
                let (asz, bsz, csz) = (ar * ac, br * bc, m * n);
                if wants(a) {
                    let da = acc!(a);
                    for i in 0..count {
                        let gi = &g[i * csz..(i + 1) * csz];
                        let bi = &val(b)[i * bsz..(i + 1) * bsz];
                        let out = &mut da[i * asz..(i + 1) * asz];
                        if !ta {
                            // dA = dC · op(B)ᵀ
                            T::gemm(
                                m,
                                n,
                                k,
                                T::one(),
                                View::new(gi, m, n),
                                View::of(bi, br, bc, !tb),
                                T::one(),
                                out,
                            );
                        } else {
                            // stored A is op(A)ᵀ: dA = op(B) · dCᵀ
                            T::gemm(
                                k,
                                n,
                                m,
                                T::one(),
                                View::of(bi, br, bc, tb),
                                View::transposed(gi, m, n),
                                T::one(),
                                out,
                            );
                        }
                    }
                }
                if wants(b) {
                    let db = acc!(b);
                    for i in 0..count {
                        let gi = &g[i * csz..(i + 1) * csz];
                        let ai = &val(a)[i * asz..(i + 1) * asz];
                        let out = &mut db[i * bsz..(i + 1) * bsz];
                        if !tb {
                            // dB = op(A)ᵀ · dC
                            T::gemm(
                                k,
                                m,
                                n,
                                T::one(),
                                View::of(ai, ar, ac, !ta),
                                View::new(gi, m, n),
                                T::one(),
                                out,
                            );
                        } else {
                            // stored B is op(B)ᵀ: dB = dCᵀ · op(A)
                            T::gemm(
                                n,
                                m,
                                k,
                                T::one(),
                                View::transposed(gi, m, n),
                                View::of(ai, ar, ac, ta),
                                T::one(),
                                out,
                            );
                        }
                    }
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if wants(v) {
                        acc!(v).iter_mut().zip(g).for_each(|(d, &x)| *d += x);
                    }
                }
            }
            &Op::Mul(a, b) => {
                if wants(a) {
                    let other = val(b);
                    acc!(a)
                        .iter_mut()
                        .zip(g)
                        .zip(other)
                        .for_each(|((d, &x), &o)| *d += x * o);
                }
                if wants(b) {
                    let other = val(a);
                    acc!(b)
                        .iter_mut()
                        .zip(g)
                        .zip(other)
                        .for_each(|((d, &x), &o)| *d += x * o);
                }
            }
            &Op::AddRow { x, row } => {
                if wants(x) {
                    acc!(x).iter_mut().zip(g).for_each(|(d, &v)| *d += v);
                }
                if wants(row) {
                    let dr = acc!(row);
                    let cols = dr.len();
                    for chunk in g.chunks(cols) {
                        dr.iter_mut().zip(chunk).for_each(|(d, &v)| *d += v);
                    }
                }
            }
            &Op::Scale(x, s) => {
                if wants(x) {
                    acc!(x).iter_mut().zip(g).for_each(|(d, &v)| *d += v * s);
                }
            }
            &Op::Relu(x) => {
                if wants(x) {
                    let inp = val(x);
                    acc!(x)
                        .iter_mut()
                        .zip(g)
                        .zip(inp)
                        .for_each(|((d, &v), &i)| {
                            if i > T::zero() {
                                *d += v
                            }
                        });
                }
            }
            &Op::Sigmoid(x) => {
                if wants(x) {
                    let y = node.value.data();
                    acc!(x)
                        .iter_mut()
                        .zip(g)
                        .zip(y)
                        .for_each(|((d, &v), &s)| *d += v * s * (T::one() - s));
                }
            }
            &Op::Softmax { x, axis, causal } => {
                if wants(x) {
                    let shape = node.value.shape();
                    let (outer, n, inner) = row_split(shape, axis);
                    let rows = if causal { shape[shape.len() - 2] } else { 1 };
                    let y = node.value.data();
                    let dx = acc!(x);
                    for o in 0..outer {
                        let limit = if causal { ((o % rows) + 1).min(n) } else { n };
                        for i in 0..inner {
                            let at = |j: usize| (o * n + j) * inner + i;
                            let mut dot = T::zero();
                            for j in 0..limit {
                                dot += y[at(j)] * g[at(j)];
                            }
                            for j in 0..limit {
                                dx[at(j)] += y[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let cols = node.value.shape().last().copied().unwrap_or(1);
                let rows = xhat.len() / cols;
                if wants(*gain) {
                    let dg = acc!(*gain);
                    for r in 0..rows {
                        for c in 0..cols {
                            dg[c] += g[r * cols + c] * xhat[r * cols + c];
                        }
                    }
                }
                if wants(*bias) {
                    let db = acc!(*bias);
                    for r in 0..rows {
                        for c in 0..cols {
                            db[c] += g[r * cols + c];
                        }
                    }
                }
                if wants(*x) {
                    let gv = val(*gain);
                    let n = T::of(cols as f64);
                    let dx = acc!(*x);
                    let mut dxhat = vec![T::zero(); cols];
                    for r in 0..rows {
                        let (mut s1, mut s2) = (T::zero(), T::zero());
                        for c in 0..cols {
                            let d = g[r * cols + c] * gv[c];
                            dxhat[c] = d;
                            s1 += d;
                            s2 += d * xhat[r * cols + c];
                        }
                        let scale = inv_std[r] / n;
                        for c in 0..cols {
                            dx[r * cols + c] +=
                                scale * (n * dxhat[c] - s1 - xhat[r * cols + c] * s2);
                        }
                    }
                }
            }
            &Op::Conv2d { x, kernel, geom } => {
                let patch = geom.kh * geom.kw * geom.cin;
                let rows = geom.ho * geom.wo;
                if wants(kernel) {
                    let cols = geom.im2col(val(x));
                    T::gemm(
                        patch,
                        rows,
                        geom.cout,
                        T::one(),
                        View::transposed(&cols, rows, patch),
                        View::new(g, rows, geom.cout),
                        T::one(),
                        acc!(kernel),
                    );
                }
                if wants(x) {
                    let mut dcols = vec![T::zero(); rows * patch];
                    T::gemm(
                        rows,
                        geom.cout,
                        patch,
                        T::one(),
                        View::new(g, rows, geom.cout),
                        View::transposed(val(kernel), patch, geom.cout),
                        T::zero(),
                        &mut dcols,
                    );
                    geom.col2im(&dcols, acc!(x));
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                ignore,
                probs,
                count,
            } => {
                if *count > 0 && wants(*logits) {
                    let classes = node_classes(&self.nodes[logits.0].value);
                    let scale = g[0] / T::of(*count as f64);
                    let dl = acc!(*logits);
                    for (r, &t) in targets.iter().enumerate() {
                        if t == *ignore {
                            continue;
                        }
                        for c in 0..classes {
                            let mut p = probs[r * classes + c];
                            if c == t {
                                p -= T::one();
                            }
                            dl[r * classes + c] += scale * p;
                        }
                    }
                }
            }
            Op::L1 {
                pred,
                target,
                mask,
                count,
            } => {
                if *count > 0 && wants(*pred) {
                    let scale = g[0] / T::of(*count as f64);
                    let p = val(*pred);
                    let dp = acc!(*pred);
                    for i in 0..dp.len() {
                        if mask[i] {
                            let diff = p[i] - target[i];
                            if diff > T::zero() {
                                dp[i] += scale;
                            } else if diff < T::zero() {
                                dp[i] -= scale;
                            }
                        }
                    }
                }
            }
            Op::Permute { x, axes } => {
                if wants(*x) {
                    let mut inverse = vec![0; axes.len()];
                    for (i, &a) in axes.iter().enumerate() {
                        inverse[a] = i;
                    }
                    let (_, back) = permute_data(g, node.value.shape(), &inverse);
                    acc!(*x).iter_mut().zip(back).for_each(|(d, v)| *d += v);
                }
            }
            &Op::Reshape(x) => {
                if wants(x) {
                    acc!(x).iter_mut().zip(g).for_each(|(d, &v)| *d += v);
                }
            }
            Op::GatherRows { table, ids } => {
                if wants(*table) {
                    let cols = node.value.shape()[1];
                    let dt = acc!(*table);
                    for (r, &i) in ids.iter().enumerate() {
                        for c in 0..cols {
                            dt[i * cols + c] += g[r * cols + c];
                        }
                    }
                }
            }
            &Op::MeanRows(x) => {
                if wants(x) {
                    let cols = g.len();
                    let dx = acc!(x);
                    let rows = dx.len() / cols;
                    let inv = T::one() / T::of(rows as f64);
                    for r in 0..rows {
                        for c in 0..cols {
                            dx[r * cols + c] += g[c] * inv;
                        }
                    }
                }
            }
            &Op::Sum(x) => {
                if wants(x) {
                    acc!(x).iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::WeightedSum(terms) => {
                for &(v, w) in terms {
                    if wants(v) {
                        acc!(v)[0] += g[0] * w;
                    }
                }
            }
        }
    }
}

fn node_classes<T: Real>(v: &Tensor<T>) -> usize {
    v.shape()[1]
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    shapes: Vec<Vec<usize>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Total gradient of the loss with respect to `v`; zero when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Tensor<T> {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor {
                shape,
                data: g.clone(),
            },
            None => Tensor::zeros(shape),
        }
    }

    /// Like [`Gradients::get`] but moves the buffer out.
    pub fn take(&mut self, v: Var) -> Tensor<T> {
        let shape = self.shapes[v.0].clone();
        match self.grads[v.0].take() {
            Some(data) => Tensor { shape, data },
            None => Tensor::zeros(shape),
        }
    }
}
