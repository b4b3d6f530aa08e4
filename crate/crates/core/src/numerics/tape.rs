//! Reverse-mode differentiation over a linear tape of matrix operations.
//!
//! A [`Tape`] is built fresh for every forward pass. Each primitive appends a
//! node holding its output value; [`Tape::backward`] walks the nodes in exact
//! reverse order, summing contributions when a value feeds several consumers.

use std::cell::RefCell;
use std::rc::Rc;

use super::params::ParamStore;
use super::tensor::{
    log_softmax_in_place, matmul_nt_raw, matmul_raw, matmul_tn_raw, sigmoid,
    softplus, transpose_raw, Tensor,
};
use crate::error::{Error, Result};

/// Added to the row variance before the square root in [`Var::layernorm`].
pub const LAYERNORM_EPS: f64 = 1e-10;

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Abs(usize),
    Softplus(usize),
    Softmax(usize),
    LogSoftmax(usize),
    LayerNorm { input: usize, inv_std: Vec<f64> },
    Transpose(usize),
    SliceRows { input: usize, start: usize },
    SliceCols { input: usize, start: usize },
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    MeanRows(usize),
    MeanCols(usize),
    Sum(usize),
    StopGradient,
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Operation record for one forward pass. Confined to a single thread.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<Vec<(usize, usize)>>,
    check_finite: bool,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.value().shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Tape that verifies every recorded output is finite.
    pub fn with_finite_checks() -> Self {
        Tape {
            check_finite: true,
            ..Tape::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var<'_>> {
        if self.check_finite {
            value.check_finite(&format!("{op:?}"))?;
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        // Constants are trusted inputs; finite checks apply to computed values.
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op: Op::Constant,
            requires_grad: false,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records a trainable leaf; `slot` is its index in the owning [`ParamStore`].
    pub fn param(&self, slot: usize, value: Tensor) -> Var<'_> {
        let v = {
            let mut nodes = self.nodes.borrow_mut();
            nodes.push(Node {
                value: Rc::new(value),
                op: Op::Param,
                requires_grad: true,
            });
            Var {
                tape: self,
                id: nodes.len() - 1,
            }
        };
        self.params.borrow_mut().push((slot, v.id));
        v
    }

    /// Registers every tensor of `store` as a parameter leaf.
    pub fn bind<'t, 's>(&'t self, store: &'s ParamStore) -> Bound<'t, 's> {
        let vars = store
            .tensors()
            .iter()
            .enumerate()
            .map(|(slot, t)| self.param(slot, t.clone()))
            .collect();
        Bound { store, vars }
    }

    /// Reverse sweep from the single-element `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got {:?}", nodes[loss.id].value.shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad {
                backprop_node(&nodes, id, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Gradients of `loss` with respect to every tensor of `store`, in store order.
    ///
    /// Every parameter must have been recorded with [`Tape::bind`] or
    /// [`Tape::param`]; parameters that do not influence `loss` get zeros.
    pub fn grad(&self, loss: Var<'_>, store: &ParamStore) -> Result<Vec<Tensor>> {
        let mut node_of = vec![None; store.len()];
        for &(slot, id) in self.params.borrow().iter() {
            if slot < node_of.len() {
                node_of[slot] = Some(id);
            }
        }
        let grads = self.backward(loss)?;
        store
            .names()
            .iter()
            .zip(store.tensors())
            .zip(&node_of)
            .map(|((name, t), node)| {
                let id = node.ok_or_else(|| Error::DetachedParameter(name.clone()))?;
                let data = grads.grads[id]
                    .clone()
                    .unwrap_or_else(|| vec![0.0; t.len()]);
                Tensor::new(t.shape().to_vec(), data)
            })
            .collect()
    }
}

/// Parameter leaves of one [`ParamStore`] recorded on a tape.
pub struct Bound<'t, 's> {
    store: &'s ParamStore,
    vars: Vec<Var<'t>>,
}

impl<'t> Bound<'t, '_> {
    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.store
            .slot(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }
}

/// Result of a reverse sweep.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `var`, zeros if the loss does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        let value = var.value();
        let data = self.grads[var.id]
            .clone()
            .unwrap_or_else(|| vec![0.0; value.len()]);
        Tensor::new(value.shape().to_vec(), data).expect("gradient matches value shape")
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: usize, contribution: Vec<f64>) {
    match &mut grads[id] {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(contribution) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contribution),
    }
}

fn backprop_node(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = &nodes[id].value;
    let wants = |i: usize| nodes[i].requires_grad;
    match &nodes[id].op {
        Op::Constant | Op::Param | Op::StopGradient => {}
        &Op::MatMul(a, b) => {
            let (m, k) = nodes[a].value.dims();
            let n = nodes[b].value.cols();
            if wants(a) {
                accumulate(grads, a, matmul_nt_raw(g, nodes[b].value.data(), m, n, k));
            }
            if wants(b) {
                accumulate(grads, b, matmul_tn_raw(nodes[a].value.data(), g, m, k, n));
            }
        }
        &Op::Add(a, b) => {
            if wants(a) {
                accumulate(grads, a, g.to_vec());
            }
            if wants(b) {
                accumulate(grads, b, g.to_vec());
            }
        }
        &Op::Sub(a, b) => {
            if wants(a) {
                accumulate(grads, a, g.to_vec());
            }
            if wants(b) {
                accumulate(grads, b, g.iter().map(|x| -x).collect());
            }
        }
        &Op::Mul(a, b) => {
            let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
            if wants(a) {
                accumulate(grads, a, g.iter().zip(bv).map(|(g, b)| g * b).collect());
            }
            if wants(b) {
                accumulate(grads, b, g.iter().zip(av).map(|(g, a)| g * a).collect());
            }
        }
        &Op::AddRow(a, b) => {
            let cols = out.cols();
            if wants(a) {
                accumulate(grads, a, g.to_vec());
            }
            if wants(b) {
                let mut db = vec![0.0; cols];
                for row in g.chunks(cols) {
                    for (d, x) in db.iter_mut().zip(row) {
                        *d += x;
                    }
                }
                accumulate(grads, b, db);
            }
        }
        &Op::MulRow(a, b) => {
            let cols = out.cols();
            let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
            if wants(a) {
                let da = g
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g * bv[i % cols])
                    .collect();
                accumulate(grads, a, da);
            }
            if wants(b) {
                let mut db = vec![0.0; cols];
                for (i, (g, a)) in g.iter().zip(av).enumerate() {
                    db[i % cols] += g * a;
                }
                accumulate(grads, b, db);
            }
        }
        &Op::Scale(a, c) => accumulate(grads, a, g.iter().map(|x| x * c).collect()),
        &Op::Relu(a) => {
            let x = nodes[a].value.data();
            let da = g
                .iter()
                .zip(x)
                .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                .collect();
            accumulate(grads, a, da);
        }
        &Op::Sigmoid(a) => {
            let da = g
                .iter()
                .zip(out.data())
                .map(|(g, y)| g * y * (1.0 - y))
                .collect();
            accumulate(grads, a, da);
        }
        &Op::Tanh(a) => {
            let da = g
                .iter()
                .zip(out.data())
                .map(|(g, y)| g * (1.0 - y * y))
                .collect();
            accumulate(grads, a, da);
        }
        &Op::Abs(a) => {
            let x = nodes[a].value.data();
            let da = g
                .iter()
                .zip(x)
                .map(|(g, &x)| {
                    if x > 0.0 {
                        *g
                    } else if x < 0.0 {
                        -g
                    } else {
                        0.0
                    }
                })
                .collect();
            accumulate(grads, a, da);
        }
        &Op::Softplus(a) => {
            let x = nodes[a].value.data();
            let da = g.iter().zip(x).map(|(g, &x)| g * sigmoid(x)).collect();
            accumulate(grads, a, da);
        }
        &Op::Softmax(a) => {
            let cols = out.cols();
            let mut da = Vec::with_capacity(g.len());
            for (gr, yr) in g.chunks(cols).zip(out.data().chunks(cols)) {
                let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                da.extend(gr.iter().zip(yr).map(|(g, y)| y * (g - dot)));
            }
            accumulate(grads, a, da);
        }
        &Op::LogSoftmax(a) => {
            let cols = out.cols();
            let mut da = Vec::with_capacity(g.len());
            for (gr, yr) in g.chunks(cols).zip(out.data().chunks(cols)) {
                let total: f64 = gr.iter().sum();
                da.extend(gr.iter().zip(yr).map(|(g, y)| g - y.exp() * total));
            }
            accumulate(grads, a, da);
        }
        Op::LayerNorm { input, inv_std } => {
            let cols = out.cols();
            let n = cols as f64;
            let mut da = Vec::with_capacity(g.len());
            for ((gr, yr), s) in g.chunks(cols).zip(out.data().chunks(cols)).zip(inv_std) {
                let mean_g = gr.iter().sum::<f64>() / n;
                let mean_gy = gr.iter().zip(yr).map(|(g, y)| g * y).sum::<f64>() / n;
                da.extend(gr.iter().zip(yr).map(|(g, y)| s * (g - mean_g - y * mean_gy)));
            }
            accumulate(grads, *input, da);
        }
        &Op::Transpose(a) => {
            let (r, c) = out.dims();
            accumulate(grads, a, transpose_raw(g, r, c));
        }
        &Op::SliceRows { input, start } => {
            let src = &nodes[input].value;
            let cols = src.cols();
            let mut da = vec![0.0; src.len()];
            da[start * cols..start * cols + g.len()].copy_from_slice(g);
            accumulate(grads, input, da);
        }
        &Op::SliceCols { input, start } => {
            let src = &nodes[input].value;
            let (rows, cols) = src.dims();
            let width = out.cols();
            let mut da = vec![0.0; src.len()];
            for r in 0..rows {
                da[r * cols + start..r * cols + start + width]
                    .copy_from_slice(&g[r * width..(r + 1) * width]);
            }
            accumulate(grads, input, da);
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for &p in parts {
                let len = nodes[p].value.len();
                if wants(p) {
                    accumulate(grads, p, g[offset..offset + len].to_vec());
                }
                offset += len;
            }
        }
        Op::ConcatCols(parts) => {
            let (rows, total) = out.dims();
            let mut offset = 0;
            for &p in parts {
                let width = nodes[p].value.cols();
                if wants(p) {
                    let mut dp = Vec::with_capacity(rows * width);
                    for r in 0..rows {
                        dp.extend_from_slice(&g[r * total + offset..r * total + offset + width]);
                    }
                    accumulate(grads, p, dp);
                }
                offset += width;
            }
        }
        &Op::MeanRows(a) => {
            let (rows, cols) = nodes[a].value.dims();
            let scale = 1.0 / rows as f64;
            let mut da = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                da.extend(g.iter().map(|x| x * scale));
            }
            accumulate(grads, a, da);
        }
        &Op::MeanCols(a) => {
            let (rows, cols) = nodes[a].value.dims();
            let scale = 1.0 / cols as f64;
            let mut da = Vec::with_capacity(rows * cols);
            for &gr in g.iter().take(rows) {
                da.extend(std::iter::repeat_n(gr * scale, cols));
            }
            accumulate(grads, a, da);
        }
        &Op::Sum(a) => {
            let len = nodes[a].value.len();
            accumulate(grads, a, vec![g[0]; len]);
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() == b.dims() {
        Ok(())
    } else {
        Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ))
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.value().dims()
    }

    fn unary(self, op: Op, value: Tensor) -> Result<Var<'t>> {
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(value, op, rg)
    }

    fn binary(self, other: Var<'t>, op: Op, value: Tensor) -> Result<Var<'t>> {
        let rg = self.tape.requires(&[self.id, other.id]);
        self.tape.push(value, op, rg)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let (m, k) = a.dims();
        let (k2, n) = b.dims();
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m},{k}] x [{k2},{n}]")));
        }
        let data = matmul_raw(a.data(), b.data(), m, k, n);
        self.binary(other, Op::MatMul(self.id, other.id), Tensor::matrix(m, n, data)?)
    }

    fn zip_with(
        self,
        other: Var<'t>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape(name, &a, &b)?;
        let (r, c) = a.dims();
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        self.binary(other, op, Tensor::matrix(r, c, data)?)
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip_with(other, "add", Op::Add(self.id, other.id), |x, y| x + y)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip_with(other, "sub", Op::Sub(self.id, other.id), |x, y| x - y)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip_with(other, "mul", Op::Mul(self.id, other.id), |x, y| x * y)
    }

    fn row_broadcast(
        self,
        row: Var<'t>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>> {
        let (a, b) = (self.value(), row.value());
        let (r, c) = a.dims();
        if b.dims() != (1, c) {
            return Err(Error::shape(
                name,
                format!("row {:?} against [{r},{c}]", b.shape()),
            ));
        }
        let bv = b.data();
        let data = a
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bv[i % c]))
            .collect();
        self.binary(row, op, Tensor::matrix(r, c, data)?)
    }

    /// Adds a `[1, cols]` row to every row.
    pub fn add_row(self, row: Var<'t>) -> Result<Var<'t>> {
        self.row_broadcast(row, "add_row", Op::AddRow(self.id, row.id), |x, y| x + y)
    }

    /// Multiplies every row elementwise by a `[1, cols]` row.
    pub fn mul_row(self, row: Var<'t>) -> Result<Var<'t>> {
        self.row_broadcast(row, "mul_row", Op::MulRow(self.id, row.id), |x, y| x * y)
    }

    pub fn scale(self, c: f64) -> Result<Var<'t>> {
        let v = self.value().map(|x| x * c);
        self.unary(Op::Scale(self.id, c), v)
    }

    pub fn relu(self) -> Result<Var<'t>> {
        let v = self.value().map(|x| x.max(0.0));
        self.unary(Op::Relu(self.id), v)
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        let v = self.value().map(sigmoid);
        self.unary(Op::Sigmoid(self.id), v)
    }

    pub fn tanh(self) -> Result<Var<'t>> {
        let v = self.value().map(f64::tanh);
        self.unary(Op::Tanh(self.id), v)
    }

    pub fn abs(self) -> Result<Var<'t>> {
        let v = self.value().map(f64::abs);
        self.unary(Op::Abs(self.id), v)
    }

    pub fn softplus(self) -> Result<Var<'t>> {
        let v = self.value().map(softplus);
        self.unary(Op::Softplus(self.id), v)
    }

    /// Softmax along `axis` (0 = down columns, 1 = across each row).
    pub fn softmax(self, axis: usize) -> Result<Var<'t>> {
        match axis {
            1 => {
                let v = self.value().softmax_rows();
                self.unary(Op::Softmax(self.id), v)
            }
            0 => self.transpose()?.softmax(1)?.transpose(),
            _ => Err(Error::shape("softmax", format!("axis {axis} out of range"))),
        }
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(self) -> Result<Var<'t>> {
        let src = self.value();
        let (r, c) = src.dims();
        let mut data = src.data().to_vec();
        for row in data.chunks_mut(c) {
            log_softmax_in_place(row);
        }
        self.unary(Op::LogSoftmax(self.id), Tensor::matrix(r, c, data)?)
    }

    /// Row-wise normalization to zero mean and unit variance, without affine terms.
    pub fn layernorm(self) -> Result<Var<'t>> {
        let src = self.value();
        let (r, c) = src.dims();
        let n = c as f64;
        let mut data = Vec::with_capacity(r * c);
        let mut inv_std = Vec::with_capacity(r);
        for row in src.data().chunks(c) {
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let s = 1.0 / (var + LAYERNORM_EPS).sqrt();
            data.extend(row.iter().map(|x| (x - mean) * s));
            inv_std.push(s);
        }
        self.unary(
            Op::LayerNorm {
                input: self.id,
                inv_std,
            },
            Tensor::matrix(r, c, data)?,
        )
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let v = self.value().transpose();
        self.unary(Op::Transpose(self.id), v)
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(self, start: usize, len: usize) -> Result<Var<'t>> {
        let src = self.value();
        let (r, c) = src.dims();
        if start + len > r || len == 0 {
            return Err(Error::shape(
                "slice_rows",
                format!("rows {start}..{} of {r}", start + len),
            ));
        }
        let data = src.data()[start * c..(start + len) * c].to_vec();
        self.unary(
            Op::SliceRows {
                input: self.id,
                start,
            },
            Tensor::matrix(len, c, data)?,
        )
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(self, start: usize, len: usize) -> Result<Var<'t>> {
        let src = self.value();
        let (r, c) = src.dims();
        if start + len > c || len == 0 {
            return Err(Error::shape(
                "slice_cols",
                format!("cols {start}..{} of {c}", start + len),
            ));
        }
        let mut data = Vec::with_capacity(r * len);
        for row in src.data().chunks(c) {
            data.extend_from_slice(&row[start..start + len]);
        }
        self.unary(
            Op::SliceCols {
                input: self.id,
                start,
            },
            Tensor::matrix(r, len, data)?,
        )
    }

    pub fn mean(self, axis: usize) -> Result<Var<'t>> {
        let src = self.value();
        let (r, c) = src.dims();
        match axis {
            0 => {
                let mut data = vec![0.0; c];
                for row in src.data().chunks(c) {
                    for (d, x) in data.iter_mut().zip(row) {
                        *d += x;
                    }
                }
                data.iter_mut().for_each(|d| *d /= r as f64);
                self.unary(Op::MeanRows(self.id), Tensor::matrix(1, c, data)?)
            }
            1 => {
                let data = src
                    .data()
                    .chunks(c)
                    .map(|row| row.iter().sum::<f64>() / c as f64)
                    .collect();
                self.unary(Op::MeanCols(self.id), Tensor::matrix(r, 1, data)?)
            }
            _ => Err(Error::shape("mean", format!("axis {axis} out of range"))),
        }
    }

    pub fn sum(self) -> Result<Var<'t>> {
        let total = self.value().data().iter().sum();
        self.unary(Op::Sum(self.id), Tensor::scalar(total))
    }

    /// Identity in the forward pass; blocks all gradient flow backward.
    pub fn stop_gradient(self) -> Result<Var<'t>> {
        let v = (*self.value()).clone();
        self.tape.push(v, Op::StopGradient, false)
    }
}

/// Stacks `parts` vertically (axis 0) or side by side (axis 1).
pub fn concat<'t>(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("concat", "no inputs"))?;
    let tape = first.tape;
    let values: Vec<Rc<Tensor>> = parts.iter().map(Var::value).collect();
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let rg = tape.requires(&ids);
    match axis {
        0 => {
            let cols = values[0].cols();
            if values.iter().any(|v| v.cols() != cols) {
                return Err(Error::shape("concat", "column counts differ"));
            }
            let rows = values.iter().map(|v| v.rows()).sum();
            let data = values.iter().flat_map(|v| v.data().iter().copied()).collect();
            tape.push(Tensor::matrix(rows, cols, data)?, Op::ConcatRows(ids), rg)
        }
        1 => {
            let rows = values[0].rows();
            if values.iter().any(|v| v.rows() != rows) {
                return Err(Error::shape("concat", "row counts differ"));
            }
            let cols = values.iter().map(|v| v.cols()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for v in &values {
                    data.extend_from_slice(v.row_slice(r));
                }
            }
            tape.push(Tensor::matrix(rows, cols, data)?, Op::ConcatCols(ids), rg)
        }
        _ => Err(Error::shape("concat", format!("axis {axis} out of range"))),
    }
}
