//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node to the tape, so node indices are already a
//! topological order and the backward pass is a single reverse sweep.

use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise operation kinds accepted by [`Graph::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Mul,
    Sigmoid,
    Tanh,
    Relu,
    Scale(f64),
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gather {
        src: Var,
        idx: Vec<usize>,
        skip: Option<usize>,
    },
    ScaleRows(Var, Vec<f64>),
    SelectRows {
        a: Var,
        b: Var,
        take_a: Vec<bool>,
    },
    Slice {
        x: Var,
        r0: usize,
        c0: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Sum(Var),
    Mean(Var),
    BceLogits {
        logits: Var,
        targets: Vec<f64>,
    },
}

struct Node {
    value: Value,
    op: Op,
    requires_grad: bool,
}

/// A computation graph. Parameter leaves borrow their values from a
/// [`ParamStore`] instead of copying them.
pub struct Graph<'p> {
    nodes: Vec<Node>,
    store: Option<&'p ParamStore>,
    param_vars: HashMap<ParamId, Var>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Graph::new()
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            store: None,
            param_vars: HashMap::new(),
        }
    }

    pub fn with_params(store: &'p ParamStore) -> Self {
        Graph {
            nodes: Vec::new(),
            store: Some(store),
            param_vars: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf whose gradient is tracked.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        if let Some(v) = self.param_vars.get(&id) {
            return Ok(*v);
        }
        let store = self
            .store
            .ok_or_else(|| Error::Contract("graph has no parameter store".into()))?;
        if id.0 >= store.len() {
            return Err(Error::Index {
                what: "parameter store",
                index: id.0,
                size: store.len(),
            });
        }
        let trainable = store.get(id).trainable;
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
            requires_grad: trainable,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => &self.store.expect("param leaf without store").get(*id).value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(Error::shape("matmul", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            ta.data(),
            (k as isize, 1),
            tb.data(),
            (n as isize, 1),
            0.0,
            &mut out,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.shape().len() != 2 {
            return Err(Error::shape("transpose", t.shape(), &[]));
        }
        let out = t.transposed();
        let rg = self.rg(a);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    // ---- pointwise ----

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() || ta.dims2() != tb.dims2() {
            return Err(Error::shape(op, ta.shape(), tb.shape()));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| f(x)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    /// Sum of two equally shaped tensors, or a matrix plus a row vector
    /// broadcast over its rows.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.dims2() != tb.dims2() && tb.rows() == 1 && tb.cols() == ta.cols() && ta.rows() > 1 {
            return self.add_row(a, b);
        }
        self.same_shape("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// `x[m×n] + row[n]` with the row repeated down every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (tx, tr) = (self.value(x), self.value(row));
        let (m, n) = tx.dims2();
        if tr.len() != n {
            return Err(Error::shape("add_row", tx.shape(), tr.shape()));
        }
        let mut data = tx.data().to_vec();
        for i in 0..m {
            for (d, b) in data[i * n..(i + 1) * n].iter_mut().zip(tr.data()) {
                *d += b;
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(out, Op::AddRow(x, row), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_map(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.map(a, |x| x * c);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.map(a, sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.map(a, f64::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| x.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    /// Dispatch on an [`Elementwise`] kind. Binary kinds take two inputs.
    pub fn elementwise(&mut self, kind: Elementwise, inputs: &[Var]) -> Result<Var> {
        let arity = match kind {
            Elementwise::Add | Elementwise::Mul => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(Error::Contract(format!(
                "{kind:?} takes {arity} inputs, got {}",
                inputs.len()
            )));
        }
        match kind {
            Elementwise::Add => self.add(inputs[0], inputs[1]),
            Elementwise::Mul => self.mul(inputs[0], inputs[1]),
            Elementwise::Sigmoid => Ok(self.sigmoid(inputs[0])),
            Elementwise::Tanh => Ok(self.tanh(inputs[0])),
            Elementwise::Relu => Ok(self.relu(inputs[0])),
            Elementwise::Scale(c) => Ok(self.scale(inputs[0], c)),
        }
    }

    /// Multiply row `i` by the constant `factors[i]`.
    pub fn scale_rows(&mut self, x: Var, factors: Vec<f64>) -> Result<Var> {
        let tx = self.value(x);
        let (m, n) = tx.dims2();
        if factors.len() != m {
            return Err(Error::shape("scale_rows", tx.shape(), &[factors.len()]));
        }
        let mut data = tx.data().to_vec();
        for (i, f) in factors.iter().enumerate() {
            data[i * n..(i + 1) * n].iter_mut().for_each(|d| *d *= f);
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::ScaleRows(x, factors), rg))
    }

    /// Row `i` of `a` where `take_a[i]`, otherwise row `i` of `b`.
    pub fn select_rows(&mut self, take_a: &[bool], a: Var, b: Var) -> Result<Var> {
        self.same_shape("select_rows", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, n) = ta.dims2();
        if take_a.len() != m {
            return Err(Error::shape("select_rows", ta.shape(), &[take_a.len()]));
        }
        let mut data = Vec::with_capacity(m * n);
        for (i, &t) in take_a.iter().enumerate() {
            data.extend_from_slice(if t { ta.row(i) } else { tb.row(i) });
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            out,
            Op::SelectRows {
                a,
                b,
                take_a: take_a.to_vec(),
            },
            rg,
        ))
    }

    // ---- normalisation ----

    /// Row-wise softmax over the last dimension, computed after subtracting
    /// the row maximum. `-inf` entries receive probability zero.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let (m, n) = tx.dims2();
        if n == 0 {
            return Err(Error::shape("softmax", tx.shape(), &[]));
        }
        let mut data = tx.data().to_vec();
        for i in 0..m {
            softmax_in_place(&mut data[i * n..(i + 1) * n]);
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Softmax(x), rg))
    }

    /// Normalise each row to zero mean and unit variance, then apply the
    /// per-column scale `gamma` and shift `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let tx = self.value(x);
        let (m, n) = tx.dims2();
        let (tg, tb) = (self.value(gamma), self.value(beta));
        if tg.len() != n || tb.len() != n {
            return Err(Error::shape("layer_norm", tx.shape(), tg.shape()));
        }
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &tx.data()[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..n {
                let h = (row[j] - mean) * is;
                xhat[i * n + j] = h;
                out[i * n + j] = h * tg.data()[j] + tb.data()[j];
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), out)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    // ---- indexing ----

    /// Rows of `src` selected by `idx`, in order. Rows equal to `skip` read
    /// as zero and never receive gradient (used for padding).
    pub fn gather_rows(&mut self, src: Var, idx: &[usize], skip: Option<usize>) -> Result<Var> {
        let ts = self.value(src);
        let (r, c) = ts.dims2();
        let mut data = vec![0.0; idx.len() * c];
        for (o, &i) in idx.iter().enumerate() {
            if i >= r {
                return Err(Error::Index {
                    what: "gather source rows",
                    index: i,
                    size: r,
                });
            }
            if Some(i) == skip {
                continue;
            }
            data[o * c..(o + 1) * c].copy_from_slice(ts.row(i));
        }
        let out = Tensor::matrix(idx.len(), c, data)?;
        let rg = self.rg(src);
        Ok(self.push(
            out,
            Op::Gather {
                src,
                idx: idx.to_vec(),
                skip,
            },
            rg,
        ))
    }

    /// The block `rows × cols` of a matrix.
    pub fn slice(
        &mut self,
        x: Var,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
    ) -> Result<Var> {
        let tx = self.value(x);
        let (m, n) = tx.dims2();
        if rows.end > m || cols.end > n || rows.start > rows.end || cols.start > cols.end {
            return Err(Error::Index {
                what: "slice bounds",
                index: rows.end.max(cols.end),
                size: m.max(n),
            });
        }
        let (nr, nc) = (rows.len(), cols.len());
        let mut data = Vec::with_capacity(nr * nc);
        for i in rows.clone() {
            data.extend_from_slice(&tx.row(i)[cols.clone()]);
        }
        let out = Tensor::matrix(nr, nc, data)?;
        let rg = self.rg(x);
        Ok(self.push(
            out,
            Op::Slice {
                x,
                r0: rows.start,
                c0: cols.start,
            },
            rg,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of nothing".into()))?;
        let m = self.value(*first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.rows() != m {
                return Err(Error::shape(
                    "concat_cols",
                    self.value(*first).shape(),
                    t.shape(),
                ));
            }
            widths.push(t.cols());
        }
        let n: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::matrix(m, n, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of nothing".into()))?;
        let n = self.value(*first).cols();
        let mut data = Vec::new();
        let mut m = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != n {
                return Err(Error::shape(
                    "concat_rows",
                    self.value(*first).shape(),
                    t.shape(),
                ));
            }
            m += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(m, n, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    // ---- reductions & losses ----

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets, with
    /// probabilities clamped to `[1e-7, 1 - 1e-7]`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let tl = self.value(logits);
        if tl.len() != targets.len() {
            return Err(Error::shape(
                "bce_with_logits",
                tl.shape(),
                &[targets.len()],
            ));
        }
        if let Some(bad) = targets.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(Error::Contract(format!("non-binary target {bad}")));
        }
        let n = targets.len() as f64;
        let loss = tl
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| {
                let p = sigmoid(z).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / n;
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BceLogits {
                logits,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    // ---- backward ----

    /// Reverse sweep from a scalar. Returns the gradient of every node that
    /// the loss depends on and that tracks gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let params = self
            .param_vars
            .iter()
            .map(|(&id, &v)| (id, v))
            .collect::<Vec<_>>();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = self.value(Var(i));
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.rg(*a) {
                    let buf = grad_buf(grads, self, *a);
                    // dA = dC · Bᵀ
                    gemm(
                        m,
                        n,
                        k,
                        g.data(),
                        (n as isize, 1),
                        tb.data(),
                        (1, n as isize),
                        1.0,
                        buf,
                    );
                }
                if self.rg(*b) {
                    let buf = grad_buf(grads, self, *b);
                    // dB = Aᵀ · dC
                    gemm(
                        k,
                        m,
                        n,
                        ta.data(),
                        (1, k as isize),
                        g.data(),
                        (n as isize, 1),
                        1.0,
                        buf,
                    );
                }
            }
            Op::Transpose(a) => {
                let gt = g.transposed();
                add_into(grad_buf(grads, self, *a), gt.data());
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.rg(v) {
                        add_into(grad_buf(grads, self, v), g.data());
                    }
                }
            }
            Op::AddRow(x, row) => {
                if self.rg(*x) {
                    add_into(grad_buf(grads, self, *x), g.data());
                }
                if self.rg(*row) {
                    let (m, n) = g.dims2();
                    let buf = grad_buf(grads, self, *row);
                    for r in 0..m {
                        for (d, v) in buf.iter_mut().zip(&g.data()[r * n..(r + 1) * n]) {
                            *d += v;
                        }
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.rg(*a) {
                    add_into(grad_buf(grads, self, *a), g.data());
                }
                if self.rg(*b) {
                    for (d, v) in grad_buf(grads, self, *b).iter_mut().zip(g.data()) {
                        *d -= v;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let buf = grad_buf(grads, self, *a);
                    for ((d, gv), bv) in buf.iter_mut().zip(g.data()).zip(tb.data()) {
                        *d += gv * bv;
                    }
                }
                if self.rg(*b) {
                    let buf = grad_buf(grads, self, *b);
                    for ((d, gv), av) in buf.iter_mut().zip(g.data()).zip(ta.data()) {
                        *d += gv * av;
                    }
                }
            }
            Op::Scale(a, c) => {
                for (d, gv) in grad_buf(grads, self, *a).iter_mut().zip(g.data()) {
                    *d += gv * c;
                }
            }
            Op::Sigmoid(a) => {
                let buf = grad_buf(grads, self, *a);
                for ((d, gv), y) in buf.iter_mut().zip(g.data()).zip(out.data()) {
                    *d += gv * y * (1.0 - y);
                }
            }
            Op::Tanh(a) => {
                let buf = grad_buf(grads, self, *a);
                for ((d, gv), y) in buf.iter_mut().zip(g.data()).zip(out.data()) {
                    *d += gv * (1.0 - y * y);
                }
            }
            Op::Relu(a) => {
                let buf = grad_buf(grads, self, *a);
                for ((d, gv), y) in buf.iter_mut().zip(g.data()).zip(out.data()) {
                    if *y > 0.0 {
                        *d += gv;
                    }
                }
            }
            Op::Softmax(a) => {
                let (m, n) = out.dims2();
                let buf = grad_buf(grads, self, *a);
                for r in 0..m {
                    let y = &out.data()[r * n..(r + 1) * n];
                    let gr = &g.data()[r * n..(r + 1) * n];
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        buf[r * n + j] += y[j] * (gr[j] - dot);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (m, n) = out.dims2();
                let tg = self.value(*gamma);
                if self.rg(*gamma) {
                    let buf = grad_buf(grads, self, *gamma);
                    for r in 0..m {
                        for j in 0..n {
                            buf[j] += g.data()[r * n + j] * xhat[r * n + j];
                        }
                    }
                }
                if self.rg(*beta) {
                    let buf = grad_buf(grads, self, *beta);
                    for row in g.data().chunks(n).take(m) {
                        for (b, v) in buf.iter_mut().zip(row) {
                            *b += v;
                        }
                    }
                }
                if self.rg(*x) {
                    let buf = grad_buf(grads, self, *x);
                    let nf = n as f64;
                    let mut dxhat = vec![0.0; n];
                    for r in 0..m {
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for j in 0..n {
                            dxhat[j] = g.data()[r * n + j] * tg.data()[j];
                            mean_d += dxhat[j];
                            mean_dx += dxhat[j] * xhat[r * n + j];
                        }
                        mean_d /= nf;
                        mean_dx /= nf;
                        for j in 0..n {
                            buf[r * n + j] +=
                                inv_std[r] * (dxhat[j] - mean_d - xhat[r * n + j] * mean_dx);
                        }
                    }
                }
            }
            Op::Gather { src, idx, skip } => {
                let c = out.cols();
                let buf = grad_buf(grads, self, *src);
                for (o, &i) in idx.iter().enumerate() {
                    if Some(i) == *skip {
                        continue;
                    }
                    for (d, v) in buf[i * c..(i + 1) * c]
                        .iter_mut()
                        .zip(&g.data()[o * c..(o + 1) * c])
                    {
                        *d += v;
                    }
                }
            }
            Op::ScaleRows(x, factors) => {
                let n = out.cols();
                let buf = grad_buf(grads, self, *x);
                for (r, f) in factors.iter().enumerate() {
                    for j in 0..n {
                        buf[r * n + j] += g.data()[r * n + j] * f;
                    }
                }
            }
            Op::SelectRows { a, b, take_a } => {
                let n = out.cols();
                for (v, want) in [(*a, true), (*b, false)] {
                    if !self.rg(v) {
                        continue;
                    }
                    let buf = grad_buf(grads, self, v);
                    for (r, &t) in take_a.iter().enumerate() {
                        if t == want {
                            add_into(&mut buf[r * n..(r + 1) * n], &g.data()[r * n..(r + 1) * n]);
                        }
                    }
                }
            }
            Op::Slice { x, r0, c0 } => {
                let (nr, nc) = out.dims2();
                let src_cols = self.value(*x).cols();
                let buf = grad_buf(grads, self, *x);
                for r in 0..nr {
                    let dst = &mut buf[(r0 + r) * src_cols + c0..(r0 + r) * src_cols + c0 + nc];
                    add_into(dst, &g.data()[r * nc..(r + 1) * nc]);
                }
            }
            Op::ConcatCols(parts) => {
                let (m, n) = out.dims2();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.rg(p) {
                        let buf = grad_buf(grads, self, p);
                        for r in 0..m {
                            add_into(
                                &mut buf[r * w..(r + 1) * w],
                                &g.data()[r * n + offset..r * n + offset + w],
                            );
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.rg(p) {
                        add_into(grad_buf(grads, self, p), &g.data()[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::Sum(x) => {
                let s = g.item();
                grad_buf(grads, self, *x).iter_mut().for_each(|d| *d += s);
            }
            Op::Mean(x) => {
                let n = self.value(*x).len().max(1) as f64;
                let s = g.item() / n;
                grad_buf(grads, self, *x).iter_mut().for_each(|d| *d += s);
            }
            Op::BceLogits { logits, targets } => {
                let n = targets.len() as f64;
                let s = g.item() / n;
                let tl = self.value(*logits);
                let buf = grad_buf(grads, self, *logits);
                for ((d, &z), &y) in buf.iter_mut().zip(tl.data()).zip(targets) {
                    *d += s * (sigmoid(z) - y);
                }
            }
        }
    }
}

/// Probability clamp applied inside the binary cross-entropy.
pub const PROB_FLOOR: f64 = 1e-7;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        row.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    row.iter_mut().for_each(|x| *x /= sum);
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn grad_buf<'a>(grads: &'a mut [Option<Tensor>], graph: &Graph, v: Var) -> &'a mut [f64] {
    grads[v.0]
        .get_or_insert_with(|| Tensor::zeros(graph.value(v).shape()))
        .data_mut()
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if `v` lies on a
    /// gradient-tracking path to the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params
            .iter()
            .filter_map(|&(id, v)| self.get(v).map(|g| (id, g)))
    }
}
