//! Tape-based reverse-mode automatic differentiation.
//!
//! Every primitive evaluates eagerly and appends one node to the [`Tape`].
//! A node keeps its inputs and saved activations only when at least one
//! input requires a gradient; otherwise it is stored as a constant. Because
//! nodes can only reference earlier nodes, the tape is always in
//! topological order and [`Tape::backward`] is a single reverse sweep.
//!
//! `backward` does not mutate the tape. Each call returns a fresh
//! [`Gradients`] buffer, so calling it twice yields identical gradients.

mod gradcheck;

pub use gradcheck::{gradient_check, GRADCHECK_STEP};

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::tensor::{matmul_at_into, matmul_bt_into, matmul_into};
use crate::{Error, Result, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    Gather(Var, Vec<usize>),
    Sum(Var),
    Bce {
        probs: Var,
        targets: Vec<f64>,
        weights: Vec<f64>,
    },
    BceLogits {
        logits: Var,
        targets: Vec<f64>,
        weights: Vec<f64>,
    },
    SoftmaxCe {
        logits: Var,
        targets: Vec<usize>,
        weights: Vec<f64>,
        softmax: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when nothing reached it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn finite(op: &'static str, t: Tensor) -> Result<Tensor> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite { op })
    }
}

fn add_into(dst: &mut Tensor, src: &[f64]) {
    for (d, s) in dst.data_mut().iter_mut().zip(src) {
        *d += s;
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a tensor that gradients should flow into.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Registers a tensor that is treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        if rg {
            self.push_raw(value, op, true)
        } else {
            self.push_raw(value, Op::Constant, false)
        }
    }

    fn binary_same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err(op, ta, tb));
        }
        Ok(())
    }

    /// `a[m x k] * b[k x n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = finite("matmul", self.value(a).matmul(self.value(b))?)?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a[m x k] * b[n x k]^T`, the layout used by weight matrices.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = ta.dims2();
        let (n, k2) = tb.dims2();
        if ta.shape().len() != 2 || tb.shape().len() != 2 || k != k2 {
            return Err(dim_err("matmul_bt", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        matmul_bt_into(ta.data(), tb.data(), &mut out, m, k, n);
        let out = finite("matmul_bt", Tensor::new(vec![m, n], out)?)?;
        Ok(self.push(out, Op::MatMulBt(a, b), &[a, b]))
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("shape preserved")
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| f(x)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("add", a, b)?;
        let out = finite("add", self.zip_map(a, b, |x, y| x + y))?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("sub", a, b)?;
        let out = finite("sub", self.zip_map(a, b, |x, y| x - y))?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("hadamard", a, b)?;
        let out = finite("hadamard", self.zip_map(a, b, |x, y| x * y))?;
        Ok(self.push(out, Op::Hadamard(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = finite("scale", self.map(a, |x| x * s))?;
        Ok(self.push(out, Op::Scale(a, s), &[a]))
    }

    /// Adds `bias` (n elements) to every row of `a[m x n]`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        let (m, n) = ta.dims2();
        if tb.len() != n {
            return Err(dim_err("add_bias", ta, tb));
        }
        let mut out = ta.clone();
        for r in 0..m {
            for (o, b) in out.data_mut()[r * n..(r + 1) * n].iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        let out = finite("add_bias", out)?;
        Ok(self.push(out, Op::AddBias(a, bias), &[a, bias]))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = finite("tanh", self.map(a, math::tanh))?;
        Ok(self.push(out, Op::Tanh(a), &[a]))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = finite("sigmoid", self.map(a, math::sigmoid))?;
        Ok(self.push(out, Op::Sigmoid(a), &[a]))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = finite("relu", self.map(a, |x| x.max(0.0)))?;
        Ok(self.push(out, Op::Relu(a), &[a]))
    }

    /// `[a | b]` for `a[m x p]`, `b[m x q]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, p) = ta.dims2();
        let (m2, q) = tb.dims2();
        if m != m2 {
            return Err(dim_err("concat_cols", ta, tb));
        }
        let mut data = Vec::with_capacity(m * (p + q));
        for r in 0..m {
            data.extend_from_slice(ta.row_slice(r));
            data.extend_from_slice(tb.row_slice(r));
        }
        let out = Tensor::new(vec![m, p + q], data)?;
        Ok(self.push(out, Op::ConcatCols(a, b), &[a, b]))
    }

    /// Columns `start..start + len` of a 2-d tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = ta.dims2();
        if len == 0 || start + len > n {
            return Err(Error::Dimension {
                op: "slice_cols",
                lhs: ta.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&ta.row_slice(r)[start..start + len]);
        }
        let out = Tensor::new(vec![m, len], data)?;
        Ok(self.push(out, Op::SliceCols(a, start), &[a]))
    }

    /// Rows `ids` of `table[V x d]`, stacked into `[ids.len() x d]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        let (v, d) = tt.dims2();
        if ids.is_empty() {
            return Err(Error::contract("gather needs at least one id"));
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::Index { index: id, size: v });
            }
            data.extend_from_slice(tt.row_slice(id));
        }
        let out = Tensor::new(vec![ids.len(), d], data)?;
        Ok(self.push(out, Op::Gather(table, ids.to_vec()), &[table]))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).data().iter().sum();
        let out = finite("sum", Tensor::scalar(s))?;
        Ok(self.push(out, Op::Sum(a), &[a]))
    }

    /// `Σ_i w_i · BCE(p_i, y_i)` over the elements of `probs`.
    ///
    /// Probabilities are clamped to `[1e-7, 1 - 1e-7]` before the logs.
    pub fn binary_cross_entropy(&mut self, probs: Var, targets: &[f64], weights: &[f64]) -> Result<Var> {
        let tp = self.value(probs);
        if tp.len() != targets.len() || tp.len() != weights.len() {
            return Err(Error::Dimension {
                op: "binary_cross_entropy",
                lhs: tp.shape().to_vec(),
                rhs: vec![targets.len(), weights.len()],
            });
        }
        let loss: f64 = tp
            .data()
            .iter()
            .zip(targets)
            .zip(weights)
            .map(|((&p, &y), &w)| w * math::binary_cross_entropy(p, y))
            .sum();
        let out = finite("binary_cross_entropy", Tensor::scalar(loss))?;
        let op = Op::Bce {
            probs,
            targets: targets.to_vec(),
            weights: weights.to_vec(),
        };
        Ok(self.push(out, op, &[probs]))
    }

    /// `Σ_i w_i · BCE(σ(x_i), y_i)` computed from logits as
    /// `y·softplus(−x) + (1 − y)·softplus(x)`. No clamp, and the gradient
    /// stays nonzero where `σ(x)` rounds to 0 or 1.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], weights: &[f64]) -> Result<Var> {
        let tl = self.value(logits);
        if tl.len() != targets.len() || tl.len() != weights.len() {
            return Err(Error::Dimension {
                op: "bce_with_logits",
                lhs: tl.shape().to_vec(),
                rhs: vec![targets.len(), weights.len()],
            });
        }
        let loss: f64 = tl
            .data()
            .iter()
            .zip(targets)
            .zip(weights)
            .map(|((&x, &y), &w)| w * (y * math::softplus(-x) + (1.0 - y) * math::softplus(x)))
            .sum();
        let out = finite("bce_with_logits", Tensor::scalar(loss))?;
        let op = Op::BceLogits {
            logits,
            targets: targets.to_vec(),
            weights: weights.to_vec(),
        };
        Ok(self.push(out, op, &[logits]))
    }

    /// `Σ_b w_b · (−log softmax(logits_b)[target_b])` over the rows of
    /// `logits[B x V]`, in log-sum-exp form. Rows with zero weight are
    /// skipped entirely, so their targets are not range checked.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Result<Var> {
        let tl = self.value(logits);
        let (b, v) = tl.dims2();
        if targets.len() != b || weights.len() != b {
            return Err(Error::Dimension {
                op: "softmax_cross_entropy",
                lhs: tl.shape().to_vec(),
                rhs: vec![targets.len(), weights.len()],
            });
        }
        let mut loss = 0.0;
        let mut softmax = vec![0.0; b * v];
        for r in 0..b {
            if weights[r] == 0.0 {
                continue;
            }
            let t = targets[r];
            if t >= v {
                return Err(Error::Index { index: t, size: v });
            }
            let row = tl.row_slice(r);
            let lse = math::log_sum_exp(row);
            loss += weights[r] * (lse - row[t]);
            for (s, &x) in softmax[r * v..(r + 1) * v].iter_mut().zip(row) {
                *s = math::exp(x - lse);
            }
        }
        let out = finite("softmax_cross_entropy", Tensor::scalar(loss))?;
        let op = Op::SoftmaxCe {
            logits,
            targets: targets.to_vec(),
            weights: weights.to_vec(),
            softmax,
        };
        Ok(self.push(out, op, &[logits]))
    }

    /// Reverse sweep from a scalar `loss`, seeded with 1.0.
    ///
    /// Gradients accumulate (`+=`) where a node fans out. Nodes that do not
    /// require gradients receive none.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract("backward requires a scalar loss"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut Tensor)) {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(node.value.shape()));
        f(slot);
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2();
                let n = tb.cols();
                self.accumulate(grads, *a, |d| matmul_bt_into(g.data(), tb.data(), d.data_mut(), m, n, k));
                self.accumulate(grads, *b, |d| matmul_at_into(ta.data(), g.data(), d.data_mut(), k, m, n));
            }
            Op::MatMulBt(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2();
                let n = tb.rows();
                self.accumulate(grads, *a, |d| matmul_into(g.data(), tb.data(), d.data_mut(), m, n, k));
                self.accumulate(grads, *b, |d| matmul_at_into(g.data(), ta.data(), d.data_mut(), n, m, k));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |d| add_into(d, g.data()));
                self.accumulate(grads, *b, |d| add_into(d, g.data()));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |d| add_into(d, g.data()));
                self.accumulate(grads, *b, |d| {
                    for (x, gv) in d.data_mut().iter_mut().zip(g.data()) {
                        *x -= gv;
                    }
                });
            }
            Op::Hadamard(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |d| {
                    for ((x, gv), bv) in d.data_mut().iter_mut().zip(g.data()).zip(tb.data()) {
                        *x += gv * bv;
                    }
                });
                self.accumulate(grads, *b, |d| {
                    for ((x, gv), av) in d.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                        *x += gv * av;
                    }
                });
            }
            Op::Scale(a, s) => {
                self.accumulate(grads, *a, |d| {
                    for (x, gv) in d.data_mut().iter_mut().zip(g.data()) {
                        *x += s * gv;
                    }
                });
            }
            Op::AddBias(a, bias) => {
                self.accumulate(grads, *a, |d| add_into(d, g.data()));
                let n = g.cols();
                self.accumulate(grads, *bias, |d| {
                    for row in g.data().chunks(n) {
                        add_into(d, row);
                    }
                });
            }
            Op::Tanh(a) => self.accumulate(grads, *a, |d| {
                for ((x, gv), t) in d.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *x += gv * (1.0 - t * t);
                }
            }),
            Op::Sigmoid(a) => self.accumulate(grads, *a, |d| {
                for ((x, gv), s) in d.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *x += gv * s * (1.0 - s);
                }
            }),
            Op::Relu(a) => self.accumulate(grads, *a, |d| {
                for ((x, gv), r) in d.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    if *r > 0.0 {
                        *x += gv;
                    }
                }
            }),
            Op::ConcatCols(a, b) => {
                let p = self.value(*a).cols();
                let n = g.cols();
                self.accumulate(grads, *a, |d| {
                    for (dst, row) in d.data_mut().chunks_mut(p).zip(g.data().chunks(n)) {
                        for (x, gv) in dst.iter_mut().zip(&row[..p]) {
                            *x += gv;
                        }
                    }
                });
                self.accumulate(grads, *b, |d| {
                    let q = n - p;
                    for (dst, row) in d.data_mut().chunks_mut(q).zip(g.data().chunks(n)) {
                        for (x, gv) in dst.iter_mut().zip(&row[p..]) {
                            *x += gv;
                        }
                    }
                });
            }
            Op::SliceCols(a, start) => {
                let n = self.value(*a).cols();
                let len = g.cols();
                self.accumulate(grads, *a, |d| {
                    for (dst, row) in d.data_mut().chunks_mut(n).zip(g.data().chunks(len)) {
                        for (x, gv) in dst[*start..*start + len].iter_mut().zip(row) {
                            *x += gv;
                        }
                    }
                });
            }
            Op::Gather(table, ids) => {
                let dcols = g.cols();
                self.accumulate(grads, *table, |d| {
                    for (row, &id) in g.data().chunks(dcols).zip(ids) {
                        let dst = &mut d.data_mut()[id * dcols..(id + 1) * dcols];
                        for (x, gv) in dst.iter_mut().zip(row) {
                            *x += gv;
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let gv = g.item();
                self.accumulate(grads, *a, |d| d.data_mut().iter_mut().for_each(|x| *x += gv));
            }
            Op::Bce {
                probs,
                targets,
                weights,
            } => {
                let gv = g.item();
                let tp = self.value(*probs);
                self.accumulate(grads, *probs, |d| {
                    for (i, x) in d.data_mut().iter_mut().enumerate() {
                        *x += gv * weights[i] * math::binary_cross_entropy_grad(tp.data()[i], targets[i]);
                    }
                });
            }
            Op::BceLogits {
                logits,
                targets,
                weights,
            } => {
                let gv = g.item();
                let tl = self.value(*logits);
                self.accumulate(grads, *logits, |d| {
                    for (i, x) in d.data_mut().iter_mut().enumerate() {
                        let (v, y) = (tl.data()[i], targets[i]);
                        let dl = (1.0 - y) * math::sigmoid(v) - y * math::sigmoid(-v);
                        *x += gv * weights[i] * dl;
                    }
                });
            }
            Op::SoftmaxCe {
                logits,
                targets,
                weights,
                softmax,
            } => {
                let gv = g.item();
                let v = self.value(*logits).cols();
                self.accumulate(grads, *logits, |d| {
                    for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let scale = gv * w;
                        let dst = &mut d.data_mut()[r * v..(r + 1) * v];
                        for (x, s) in dst.iter_mut().zip(&softmax[r * v..(r + 1) * v]) {
                            *x += scale * s;
                        }
                        dst[t] -= scale;
                    }
                });
            }
        }
    }
}
