//! Forward and backward rules for every operation the tape can record.

use std::rc::Rc;

use super::tape::Var;
use super::{Mask, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Mean,
    Max,
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add {
        broadcast: bool,
    },
    Sub {
        broadcast: bool,
    },
    Mul {
        broadcast: bool,
    },
    AddBias,
    Scale(f64),
    Tanh,
    Sigmoid,
    Relu,
    Abs,
    MatMul {
        shared_rhs: bool,
    },
    /// Input viewed as `[N, D]`; output row `r` is input row `rows[r]`.
    Gather {
        rows: Vec<usize>,
    },
    Reshape,
    ConcatLast {
        widths: Vec<usize>,
    },
    SliceLast {
        start: usize,
    },
    /// Row `r` (along the first axis) comes from the first input when
    /// `mask[r]`, otherwise from the second.
    SelectRows {
        mask: Vec<bool>,
    },
    MaskedSoftmax,
    CrossEntropy {
        targets: Vec<usize>,
        rows: Vec<bool>,
        count: usize,
        probs: Vec<f64>,
        from_logits: bool,
    },
    MaskedPool {
        kind: PoolKind,
        mask: Vec<bool>,
        argmax: Vec<usize>,
    },
    Sum,
    Mean,
}

type R<T> = Result<T, TensorError>;

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// `Some(false)` for equal shapes, `Some(true)` when `b` equals `a` except
/// for a trailing dimension of 1, `None` otherwise.
fn broadcast_kind(a: &[usize], b: &[usize]) -> Option<bool> {
    if a == b {
        return Some(false);
    }
    let n = a.len();
    (n > 0 && b.len() == n && a[..n - 1] == b[..n - 1] && b[n - 1] == 1).then_some(true)
}

impl<'t> Var<'t> {
    fn binary(self, other: Var<'t>, name: &'static str, f: impl Fn(f64, f64) -> f64, make: impl Fn(bool) -> Op) -> R<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let broadcast = broadcast_kind(a.shape(), b.shape()).ok_or_else(|| TensorError::ShapeMismatch {
            op: name,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        })?;
        let d = a.last_dim().max(1);
        let data = a.data().iter().enumerate().map(|(i, &x)| f(x, b.data()[if broadcast { i / d } else { i }])).collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.tape.push(out, make(broadcast), vec![self.id, other.id]))
    }

    /// Elementwise sum; `other` may have a trailing dimension of 1.
    #[allow(clippy::should_implement_trait)]
    pub fn add(self, other: Var<'t>) -> R<Var<'t>> {
        self.binary(other, "add", |x, y| x + y, |broadcast| Op::Add { broadcast })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, other: Var<'t>) -> R<Var<'t>> {
        self.binary(other, "sub", |x, y| x - y, |broadcast| Op::Sub { broadcast })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, other: Var<'t>) -> R<Var<'t>> {
        self.binary(other, "mul", |x, y| x * y, |broadcast| Op::Mul { broadcast })
    }

    /// Adds a `[D]` vector to every row of a `[.., D]` tensor.
    pub fn add_bias(self, bias: Var<'t>) -> R<Var<'t>> {
        let (a, b) = (self.value(), bias.value());
        if b.rank() != 1 || a.rank() == 0 || a.last_dim() != b.numel() {
            return Err(TensorError::ShapeMismatch { op: "add_bias", left: a.shape().to_vec(), right: b.shape().to_vec() });
        }
        let d = b.numel();
        let data = a.data().iter().enumerate().map(|(i, &x)| x + b.data()[i % d]).collect();
        Ok(self.tape.push(Tensor::new(a.shape().to_vec(), data)?, Op::AddBias, vec![self.id, bias.id]))
    }

    pub fn scale(self, factor: f64) -> Var<'t> {
        self.unary(Op::Scale(factor), |x| x * factor)
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let a = self.value();
        let out = Tensor::new(a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect()).expect("same shape");
        self.tape.push(out, op, vec![self.id])
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh, f64::tanh)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid, sigmoid)
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(Op::Relu, |x| x.max(0.0))
    }

    pub fn abs(self) -> Var<'t> {
        self.unary(Op::Abs, f64::abs)
    }

    /// Matrix product over the last two axes. `other` is either `[k, n]`
    /// (shared across all leading batch axes) or has the same leading axes.
    pub fn matmul(self, other: Var<'t>) -> R<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let mismatch = || TensorError::ShapeMismatch { op: "matmul", left: a.shape().to_vec(), right: b.shape().to_vec() };
        if a.rank() < 2 || b.rank() < 2 {
            return Err(mismatch());
        }
        let (m, k) = (a.shape()[a.rank() - 2], a.shape()[a.rank() - 1]);
        let (k2, n) = (b.shape()[b.rank() - 2], b.shape()[b.rank() - 1]);
        let shared_rhs = b.rank() == 2;
        if k != k2 || (!shared_rhs && a.shape()[..a.rank() - 2] != b.shape()[..b.rank() - 2]) {
            return Err(mismatch());
        }
        let batch = numel(&a.shape()[..a.rank() - 2]);
        let mut out = vec![0.0; batch * m * n];
        for bi in 0..batch {
            let a_blk = &a.data()[bi * m * k..(bi + 1) * m * k];
            let b_blk = if shared_rhs { b.data() } else { &b.data()[bi * k * n..(bi + 1) * k * n] };
            gemm(a_blk, b_blk, &mut out[bi * m * n..(bi + 1) * m * n], m, k, n);
        }
        let mut shape = a.shape()[..a.rank() - 2].to_vec();
        shape.extend([m, n]);
        Ok(self.tape.push(Tensor::new(shape, out)?, Op::MatMul { shared_rhs }, vec![self.id, other.id]))
    }

    /// Selects rows of this tensor viewed as `[N, D]` (D = last dim) and
    /// reshapes the result to `out_shape`, whose last dim must be D.
    pub fn gather_rows(self, rows: &[usize], out_shape: &[usize]) -> R<Var<'t>> {
        let a = self.value();
        let d = a.last_dim();
        let n = a.numel().checked_div(d).unwrap_or(0);
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(TensorError::IndexOutOfRange { op: "gather_rows", index: bad, bound: n });
        }
        if numel(out_shape) != rows.len() * d || out_shape.last().copied().unwrap_or(1) != d {
            return Err(TensorError::InvalidShape {
                op: "gather_rows",
                shape: out_shape.to_vec(),
                expected: format!("{} rows of width {d}", rows.len()),
            });
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            data.extend_from_slice(&a.data()[r * d..(r + 1) * d]);
        }
        Ok(self.tape.push(Tensor::new(out_shape.to_vec(), data)?, Op::Gather { rows: rows.to_vec() }, vec![self.id]))
    }

    /// Looks up rows of a `[V, D]` table for a `[B, T]` grid of ids,
    /// producing `[B, T, D]`. Gradients scatter-add into the table.
    pub fn embedding_lookup(self, ids: &[usize], grid: &[usize]) -> R<Var<'t>> {
        let table = self.value();
        if table.rank() != 2 {
            return Err(TensorError::InvalidShape { op: "embedding_lookup", shape: table.shape().to_vec(), expected: "[V, D]".into() });
        }
        let vocab = table.shape()[0];
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(TensorError::IndexOutOfRange { op: "embedding_lookup", index: bad, bound: vocab });
        }
        if numel(grid) != ids.len() {
            return Err(TensorError::DataLength { shape: grid.to_vec(), expected: numel(grid), len: ids.len() });
        }
        let mut shape = grid.to_vec();
        shape.push(table.shape()[1]);
        self.gather_rows(ids, &shape)
    }

    pub fn reshape(self, shape: &[usize]) -> R<Var<'t>> {
        let a = self.value();
        let out = (*a).clone().reshape(shape)?;
        Ok(self.tape.push(out, Op::Reshape, vec![self.id]))
    }

    /// Slice `[start, start + len)` of the last axis.
    pub fn slice_last(self, start: usize, len: usize) -> R<Var<'t>> {
        let a = self.value();
        let w = a.last_dim();
        if a.rank() == 0 || start + len > w {
            return Err(TensorError::IndexOutOfRange { op: "slice_last", index: start + len, bound: w });
        }
        let mut data = Vec::with_capacity(a.numel() / w.max(1) * len);
        for row in a.data().chunks(w.max(1)) {
            data.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = a.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        Ok(self.tape.push(Tensor::new(shape, data)?, Op::SliceLast { start }, vec![self.id]))
    }

    /// Row-wise choice between `self` (mask set) and `other` (mask clear)
    /// along the first axis.
    pub fn select_rows(self, mask: &[bool], other: Var<'t>) -> R<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() || a.rank() == 0 || a.shape()[0] != mask.len() {
            return Err(TensorError::ShapeMismatch { op: "select_rows", left: a.shape().to_vec(), right: b.shape().to_vec() });
        }
        let w = if mask.is_empty() { 0 } else { a.numel() / mask.len() };
        let mut data = Vec::with_capacity(a.numel());
        for (r, &keep) in mask.iter().enumerate() {
            let src = if keep { &a } else { &b };
            data.extend_from_slice(&src.data()[r * w..(r + 1) * w]);
        }
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.tape.push(out, Op::SelectRows { mask: mask.to_vec() }, vec![self.id, other.id]))
    }

    /// Softmax over the last axis restricted to unmasked positions; masked
    /// positions get probability exactly 0.
    pub fn masked_softmax(self, mask: &Mask) -> R<Var<'t>> {
        let x = self.value();
        if x.shape() != mask.shape() || x.rank() == 0 {
            return Err(TensorError::ShapeMismatch { op: "masked_softmax", left: x.shape().to_vec(), right: mask.shape().to_vec() });
        }
        let t = x.last_dim();
        let mut data = vec![0.0; x.numel()];
        for (row, (xs, ms)) in x.data().chunks(t).zip(mask.data().chunks(t)).enumerate() {
            let probs = softmax_row(xs, Some(ms)).ok_or(TensorError::EmptyMaskRow { op: "masked_softmax", row })?;
            data[row * t..(row + 1) * t].copy_from_slice(&probs);
        }
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.tape.push(out, Op::MaskedSoftmax, vec![self.id]))
    }

    /// Mean negative log-likelihood of `targets` over a `[N, C]` input.
    pub fn cross_entropy(self, targets: &[usize], from_logits: bool) -> R<Var<'t>> {
        self.masked_cross_entropy(targets, None, None, from_logits).map(|(loss, _)| loss)
    }

    /// Cross entropy with optional row inclusion and column masks.
    ///
    /// Only rows with `rows[r]` set contribute, and the mean is over those
    /// rows. Masked columns are excluded from the normalization when working
    /// from logits. Returns the loss and each row's negative log-likelihood
    /// (0 for excluded rows).
    pub fn masked_cross_entropy(
        self,
        targets: &[usize],
        rows: Option<&[bool]>,
        columns: Option<&Mask>,
        from_logits: bool,
    ) -> R<(Var<'t>, Vec<f64>)> {
        let x = self.value();
        if x.rank() != 2 || targets.len() != x.shape()[0] {
            return Err(TensorError::InvalidShape {
                op: "cross_entropy",
                shape: x.shape().to_vec(),
                expected: format!("[{}, C]", targets.len()),
            });
        }
        let (n, c) = (x.shape()[0], x.shape()[1]);
        let rows: Vec<bool> = match rows {
            Some(r) if r.len() != n => {
                return Err(TensorError::DataLength { shape: vec![n], expected: n, len: r.len() });
            }
            Some(r) => r.to_vec(),
            None => vec![true; n],
        };
        if let Some(cm) = columns {
            if cm.shape() != x.shape() {
                return Err(TensorError::ShapeMismatch { op: "cross_entropy", left: x.shape().to_vec(), right: cm.shape().to_vec() });
            }
        }
        let count = rows.iter().filter(|&&r| r).count();
        if count == 0 {
            return Err(TensorError::EmptyMaskRow { op: "cross_entropy", row: 0 });
        }
        let mut probs = vec![0.0; n * c];
        let mut row_losses = vec![0.0; n];
        for r in 0..n {
            let target = targets[r];
            if !rows[r] {
                continue;
            }
            if target >= c {
                return Err(TensorError::IndexOutOfRange { op: "cross_entropy", index: target, bound: c });
            }
            let xs = &x.data()[r * c..(r + 1) * c];
            let ms = columns.map(|m| &m.data()[r * c..(r + 1) * c]);
            if ms.is_some_and(|m| !m[target]) {
                return Err(TensorError::IndexOutOfRange { op: "cross_entropy (masked target)", index: target, bound: c });
            }
            if from_logits {
                let (p, log_z) = log_softmax_parts(xs, ms).ok_or(TensorError::EmptyMaskRow { op: "cross_entropy", row: r })?;
                row_losses[r] = log_z - xs[target];
                probs[r * c..(r + 1) * c].copy_from_slice(&p);
            } else {
                row_losses[r] = -xs[target].ln();
                probs[r * c..(r + 1) * c].copy_from_slice(xs);
            }
        }
        let loss = row_losses.iter().sum::<f64>() / count as f64;
        let op = Op::CrossEntropy { targets: targets.to_vec(), rows, count, probs, from_logits };
        Ok((self.tape.push(Tensor::scalar(loss), op, vec![self.id]), row_losses))
    }

    /// Pools `[B, T, D]` over T using only unmasked positions.
    pub fn masked_pool(self, kind: PoolKind, mask: &Mask) -> R<Var<'t>> {
        let x = self.value();
        if x.rank() != 3 || mask.shape() != &x.shape()[..2] {
            return Err(TensorError::ShapeMismatch { op: "masked_pool", left: x.shape().to_vec(), right: mask.shape().to_vec() });
        }
        let (b, t, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let mut out = vec![0.0; b * d];
        let mut argmax = vec![0; b * d];
        for bi in 0..b {
            let m = &mask.data()[bi * t..(bi + 1) * t];
            let count = m.iter().filter(|&&v| v).count();
            if count == 0 {
                return Err(TensorError::EmptyMaskRow { op: "masked_pool", row: bi });
            }
            for di in 0..d {
                let at = |ti: usize| x.data()[(bi * t + ti) * d + di];
                match kind {
                    PoolKind::Mean => {
                        out[bi * d + di] = (0..t).filter(|&ti| m[ti]).map(at).sum::<f64>() / count as f64;
                    }
                    PoolKind::Max => {
                        let mut best: Option<usize> = None;
                        for ti in (0..t).filter(|&ti| m[ti]) {
                            if best.is_none_or(|bt| at(ti) > at(bt)) {
                                best = Some(ti);
                            }
                        }
                        let bt = best.expect("row has an unmasked position");
                        argmax[bi * d + di] = bt;
                        out[bi * d + di] = at(bt);
                    }
                }
            }
        }
        let op = Op::MaskedPool { kind, mask: mask.data().to_vec(), argmax };
        Ok(self.tape.push(Tensor::new(vec![b, d], out)?, op, vec![self.id]))
    }

    pub fn sum(self) -> Var<'t> {
        let s = self.value().data().iter().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum, vec![self.id])
    }

    pub fn mean(self) -> Var<'t> {
        let v = self.value();
        let s = v.data().iter().sum::<f64>() / v.numel().max(1) as f64;
        self.tape.push(Tensor::scalar(s), Op::Mean, vec![self.id])
    }
}

/// Concatenates along the last axis; all other axes must agree.
pub(crate) fn concat_last<'t>(xs: &[Var<'t>]) -> R<Var<'t>> {
    let first = xs.first().ok_or(TensorError::InvalidShape { op: "concat_last", shape: vec![], expected: "at least one input".into() })?;
    let values: Vec<Rc<Tensor>> = xs.iter().map(|v| v.value()).collect();
    let lead = &values[0].shape()[..values[0].rank().saturating_sub(1)];
    for v in &values {
        if v.rank() == 0 || &v.shape()[..v.rank() - 1] != lead {
            return Err(TensorError::ShapeMismatch { op: "concat_last", left: values[0].shape().to_vec(), right: v.shape().to_vec() });
        }
    }
    let widths: Vec<usize> = values.iter().map(|v| v.last_dim()).collect();
    let total: usize = widths.iter().sum();
    let rows = numel(lead);
    let mut data = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for (v, &w) in values.iter().zip(&widths) {
            data.extend_from_slice(&v.data()[r * w..(r + 1) * w]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total);
    let ids = xs.iter().map(|v| v.id).collect();
    Ok(first.tape.push(Tensor::new(shape, data)?, Op::ConcatLast { widths }, ids))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax over the unmasked entries; `None` if all masked.
pub(crate) fn softmax_row(xs: &[f64], mask: Option<&[bool]>) -> Option<Vec<f64>> {
    log_softmax_parts(xs, mask).map(|(p, _)| p)
}

/// Softmax probabilities and the log partition function.
fn log_softmax_parts(xs: &[f64], mask: Option<&[bool]>) -> Option<(Vec<f64>, f64)> {
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    let max = (0..xs.len()).filter(|&i| keep(i)).map(|i| xs[i]).fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))))?;
    let exps: Vec<f64> = (0..xs.len()).map(|i| if keep(i) { (xs[i] - max).exp() } else { 0.0 }).collect();
    let z: f64 = exps.iter().sum();
    Some((exps.iter().map(|e| e / z).collect(), max + z.ln()))
}

// c += a[m,k] * b[k,n]
fn gemm(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cj, bj) in c_row.iter_mut().zip(b_row) {
                *cj += aip * bj;
            }
        }
    }
}

// c += a[m,k] * b[n,k]^T
fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            c[i * n + j] += a_row.iter().zip(b_row).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

// c += a[k,m]^T * b[k,n]
fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == 0.0 {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cj, bj) in c_row.iter_mut().zip(b_row) {
                *cj += api * bj;
            }
        }
    }
}

fn map_grad(g: &Tensor, x: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = g.data().iter().zip(x.data()).map(|(&gi, &xi)| f(gi, xi)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Sums `g` over the last axis when the second operand was broadcast.
fn reduce_broadcast(g: Vec<f64>, a_shape: &[usize], b_shape: &[usize], broadcast: bool) -> Tensor {
    let data = if broadcast {
        let d = a_shape.last().copied().unwrap_or(1).max(1);
        g.chunks(d).map(|row| row.iter().sum()).collect()
    } else {
        g
    };
    Tensor::new(b_shape.to_vec(), data).expect("broadcast shape")
}

/// Gradients of an op's inputs given the gradient of its output.
pub(crate) fn backward(op: &Op, inputs: &[Rc<Tensor>], out: &Tensor, g: &Tensor) -> Vec<Option<Tensor>> {
    match op {
        Op::Leaf => Vec::new(),
        Op::Add { broadcast } | Op::Sub { broadcast } => {
            let (a, b) = (&inputs[0], &inputs[1]);
            let sign = if matches!(op, Op::Sub { .. }) { -1.0 } else { 1.0 };
            let gb = reduce_broadcast(g.data().iter().map(|x| sign * x).collect(), a.shape(), b.shape(), *broadcast);
            vec![Some(g.clone()), Some(gb)]
        }
        Op::Mul { broadcast } => {
            let (a, b) = (&inputs[0], &inputs[1]);
            let d = a.last_dim().max(1);
            let bi = |i: usize| if *broadcast { i / d } else { i };
            let ga: Vec<f64> = g.data().iter().enumerate().map(|(i, gi)| gi * b.data()[bi(i)]).collect();
            let gb_full: Vec<f64> = g.data().iter().zip(a.data()).map(|(gi, ai)| gi * ai).collect();
            vec![
                Some(Tensor::new(a.shape().to_vec(), ga).expect("same shape")),
                Some(reduce_broadcast(gb_full, a.shape(), b.shape(), *broadcast)),
            ]
        }
        Op::AddBias => {
            let d = inputs[1].numel();
            let mut gb = vec![0.0; d];
            for (i, gi) in g.data().iter().enumerate() {
                gb[i % d] += gi;
            }
            vec![Some(g.clone()), Some(Tensor::vector(gb))]
        }
        Op::Scale(c) => vec![Some(map_grad(g, &inputs[0], |gi, _| gi * c))],
        Op::Tanh => vec![Some(map_grad(g, out, |gi, y| gi * (1.0 - y * y)))],
        Op::Sigmoid => vec![Some(map_grad(g, out, |gi, y| gi * y * (1.0 - y)))],
        Op::Relu => vec![Some(map_grad(g, &inputs[0], |gi, x| if x > 0.0 { gi } else { 0.0 }))],
        Op::Abs => vec![Some(map_grad(g, &inputs[0], |gi, x| {
            if x > 0.0 {
                gi
            } else if x < 0.0 {
                -gi
            } else {
                0.0
            }
        }))],
        Op::MatMul { shared_rhs } => {
            let (a, b) = (&inputs[0], &inputs[1]);
            let (m, k) = (a.shape()[a.rank() - 2], a.shape()[a.rank() - 1]);
            let n = b.shape()[b.rank() - 1];
            let batch = numel(&a.shape()[..a.rank() - 2]);
            let mut ga = vec![0.0; a.numel()];
            let mut gb = vec![0.0; b.numel()];
            for bi in 0..batch {
                let g_blk = &g.data()[bi * m * n..(bi + 1) * m * n];
                let a_blk = &a.data()[bi * m * k..(bi + 1) * m * k];
                let (b_off, b_len) = if *shared_rhs { (0, k * n) } else { (bi * k * n, k * n) };
                gemm_nt(g_blk, &b.data()[b_off..b_off + b_len], &mut ga[bi * m * k..(bi + 1) * m * k], m, n, k);
                gemm_tn(a_blk, g_blk, &mut gb[b_off..b_off + b_len], k, m, n);
            }
            vec![Some(Tensor::new(a.shape().to_vec(), ga).expect("shape")), Some(Tensor::new(b.shape().to_vec(), gb).expect("shape"))]
        }
        Op::Gather { rows } => {
            let a = &inputs[0];
            let d = a.last_dim();
            let mut ga = vec![0.0; a.numel()];
            for (r, &src) in rows.iter().enumerate() {
                for j in 0..d {
                    ga[src * d + j] += g.data()[r * d + j];
                }
            }
            vec![Some(Tensor::new(a.shape().to_vec(), ga).expect("shape"))]
        }
        Op::Reshape => vec![Some(g.clone().reshape(inputs[0].shape()).expect("same numel"))],
        Op::ConcatLast { widths } => {
            let total: usize = widths.iter().sum();
            let rows = g.numel().checked_div(total).unwrap_or(0);
            let mut parts: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(rows * w)).collect();
            for row in g.data().chunks(total.max(1)) {
                let mut off = 0;
                for (part, &w) in parts.iter_mut().zip(widths) {
                    part.extend_from_slice(&row[off..off + w]);
                    off += w;
                }
            }
            parts.into_iter().zip(inputs).map(|(p, x)| Some(Tensor::new(x.shape().to_vec(), p).expect("shape"))).collect()
        }
        Op::SliceLast { start } => {
            let a = &inputs[0];
            let (w, len) = (a.last_dim(), out.last_dim());
            let mut ga = vec![0.0; a.numel()];
            for (r, grow) in g.data().chunks(len.max(1)).enumerate() {
                ga[r * w + start..r * w + start + len].copy_from_slice(grow);
            }
            vec![Some(Tensor::new(a.shape().to_vec(), ga).expect("shape"))]
        }
        Op::SelectRows { mask } => {
            let w = if mask.is_empty() { 0 } else { g.numel() / mask.len() };
            let mut ga = vec![0.0; g.numel()];
            let mut gb = vec![0.0; g.numel()];
            for (r, &keep) in mask.iter().enumerate() {
                let dst = if keep { &mut ga } else { &mut gb };
                dst[r * w..(r + 1) * w].copy_from_slice(&g.data()[r * w..(r + 1) * w]);
            }
            let shape = g.shape().to_vec();
            vec![Some(Tensor::new(shape.clone(), ga).expect("shape")), Some(Tensor::new(shape, gb).expect("shape"))]
        }
        Op::MaskedSoftmax => {
            let t = out.last_dim();
            let mut gx = vec![0.0; out.numel()];
            for ((ys, gs), dst) in out.data().chunks(t).zip(g.data().chunks(t)).zip(gx.chunks_mut(t)) {
                let dot: f64 = ys.iter().zip(gs).map(|(y, gi)| y * gi).sum();
                for ((d, y), gi) in dst.iter_mut().zip(ys).zip(gs) {
                    *d = y * (gi - dot);
                }
            }
            vec![Some(Tensor::new(out.shape().to_vec(), gx).expect("shape"))]
        }
        Op::CrossEntropy { targets, rows, count, probs, from_logits } => {
            let x = &inputs[0];
            let c = x.shape()[1];
            let scale = g.item() / *count as f64;
            let mut gx = vec![0.0; x.numel()];
            for (r, &target) in targets.iter().enumerate() {
                if !rows[r] {
                    continue;
                }
                if *from_logits {
                    for j in 0..c {
                        gx[r * c + j] = scale * probs[r * c + j];
                    }
                    gx[r * c + target] -= scale;
                } else {
                    gx[r * c + target] = -scale / probs[r * c + target];
                }
            }
            vec![Some(Tensor::new(x.shape().to_vec(), gx).expect("shape"))]
        }
        Op::MaskedPool { kind, mask, argmax } => {
            let x = &inputs[0];
            let (b, t, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let mut gx = vec![0.0; x.numel()];
            for bi in 0..b {
                let m = &mask[bi * t..(bi + 1) * t];
                let count = m.iter().filter(|&&v| v).count() as f64;
                for di in 0..d {
                    let gi = g.data()[bi * d + di];
                    match kind {
                        PoolKind::Mean => {
                            for ti in (0..t).filter(|&ti| m[ti]) {
                                gx[(bi * t + ti) * d + di] += gi / count;
                            }
                        }
                        PoolKind::Max => gx[(bi * t + argmax[bi * d + di]) * d + di] += gi,
                    }
                }
            }
            vec![Some(Tensor::new(x.shape().to_vec(), gx).expect("shape"))]
        }
        Op::Sum => vec![Some(Tensor::full(inputs[0].shape(), g.item()))],
        Op::Mean => {
            let n = inputs[0].numel().max(1) as f64;
            vec![Some(Tensor::full(inputs[0].shape(), g.item() / n))]
        }
    }
}
