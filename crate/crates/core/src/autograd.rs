//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as a node appended to a tape, so node
//! indices are already a topological order. [`Graph::backward`] walks the
//! tape once in reverse, accumulating gradients into each parent. A node
//! that feeds several consumers receives the sum of their contributions.
//!
//! ```
//! use vitalcast::autograd::Graph;
//! use vitalcast::Tensor;
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::scalar(3.0));
//! let y = g.mul(x, x).unwrap();
//! let grads = g.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap().item(), 6.0);
//! ```

use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

/// Layer-norm variance stabilizer.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Elu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x >= 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if x >= 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, f64),
    MatMul(Var, Var),
    BatchMatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    Act(Var, Activation),
    Glu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        shift: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Softmax(Var),
    Gather {
        x: Var,
        index: Rc<Vec<usize>>,
    },
    Reshape(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    ScaleRows(Var, Var),
    Sum(Var),
    Mean(Var),
    /// Scalar whose gradient w.r.t. `x` was computed alongside the value.
    ScalarWithGrad {
        x: Var,
        grad: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A tape of tensor operations supporting one reverse pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `var`; `None` when `var` does not
    /// require a gradient or does not influence the loss.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|&p| self.needs(p));
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(va.shape(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let v = self.value(x).map(|e| scale * e + shift);
        self.push(v, Op::Affine(x, scale), &[x])
    }

    /// Adds a `[d]` row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let d = self.value(a).last_dim();
        if self.value(row).len() != d {
            return Err(Error::shape("add_row", self.shape(a), self.shape(row)));
        }
        let r = self.value(row).data().to_vec();
        let mut v = self.value(a).clone();
        for chunk in v.data_mut().chunks_mut(d) {
            for (x, b) in chunk.iter_mut().zip(&r) {
                *x += b;
            }
        }
        Ok(self.push(v, Op::AddRow(a, row), &[a, row]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; n * m];
        gemm(
            n,
            k,
            m,
            self.value(a).data(),
            k as isize,
            1,
            self.value(b).data(),
            m as isize,
            1,
            0.0,
            &mut out,
        );
        let v = Tensor::new(&[n, m], out)?;
        Ok(self.push(v, Op::MatMul(a, b), &[a, b]))
    }

    /// `x[n,in] · w[in,out] + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[0] {
            return Err(Error::shape("linear", sx, sw));
        }
        if sb.iter().product::<usize>() != sw[1] {
            return Err(Error::shape("linear", sw, sb));
        }
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    /// Batched product of `[g,n,k]` with `[g,k,m]`, or with `[g,m,k]`
    /// transposed when `trans_b` is set.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let ok = sa.len() == 3
            && sb.len() == 3
            && sa[0] == sb[0]
            && if trans_b { sa[2] == sb[2] } else { sa[2] == sb[1] };
        if !ok {
            return Err(Error::shape("batch_matmul", &sa, &sb));
        }
        let (groups, n, k) = (sa[0], sa[1], sa[2]);
        let m = if trans_b { sb[1] } else { sb[2] };
        let mut out = vec![0.0; groups * n * m];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for gi in 0..groups {
            let ab = &da[gi * n * k..(gi + 1) * n * k];
            let bb = &db[gi * k * m..(gi + 1) * k * m];
            let (rs, cs) = if trans_b { (1, k as isize) } else { (m as isize, 1) };
            gemm(
                n,
                k,
                m,
                ab,
                k as isize,
                1,
                bb,
                rs,
                cs,
                0.0,
                &mut out[gi * n * m..(gi + 1) * n * m],
            );
        }
        let v = Tensor::new(&[groups, n, m], out)?;
        Ok(self.push(v, Op::BatchMatMul { a, b, trans_b }, &[a, b]))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let v = self.value(x).map(|e| kind.apply(e));
        self.push(v, Op::Act(x, kind), &[x])
    }

    /// Gated linear unit over the last axis: `first ⊙ sigmoid(second)`.
    pub fn glu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let d2 = t.last_dim();
        if d2 % 2 != 0 {
            return Err(Error::shape("glu", t.shape(), &[d2]));
        }
        let d = d2 / 2;
        let mut out = Vec::with_capacity(t.len() / 2);
        for row in t.data().chunks(d2) {
            for j in 0..d {
                out.push(row[j] * sigmoid(row[d + j]));
            }
        }
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = d;
        let v = Tensor::new(&shape, out)?;
        Ok(self.push(v, Op::Glu(x), &[x]))
    }

    /// Per-row normalization to zero mean and unit variance followed by an
    /// affine `gain`/`shift`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var) -> Result<Var> {
        let t = self.value(x);
        let d = t.last_dim();
        if self.value(gain).len() != d || self.value(shift).len() != d {
            return Err(Error::shape("layer_norm", t.shape(), self.shape(gain)));
        }
        let (gv, sv) = (self.value(gain).data(), self.value(shift).data());
        let mut normalized = Vec::with_capacity(t.len());
        let mut inv_std = Vec::with_capacity(t.rows());
        let mut out = Vec::with_capacity(t.len());
        for row in t.data().chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d as f64;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(r);
            for j in 0..d {
                let xh = (row[j] - mean) * r;
                normalized.push(xh);
                out.push(gv[j] * xh + sv[j]);
            }
        }
        let v = Tensor::new(t.shape(), out)?;
        Ok(self.push(
            v,
            Op::LayerNorm {
                x,
                gain,
                shift,
                normalized,
                inv_std,
            },
            &[x, gain, shift],
        ))
    }

    /// Non-overlapping max pooling along the last axis; see [`max_pool_1d`].
    pub fn max_pool_1d(&mut self, x: Var, kernel: usize) -> Result<Var> {
        if kernel == 0 {
            return Err(Error::Parameter("pooling kernel must be >= 1".into()));
        }
        let t = self.value(x);
        let len = t.last_dim();
        let out_len = len.div_ceil(kernel);
        let mut out = Vec::with_capacity(t.rows() * out_len);
        let mut argmax = Vec::with_capacity(t.rows() * out_len);
        for (r, row) in t.data().chunks(len).enumerate() {
            for w in 0..out_len {
                let lo = w * kernel;
                let hi = (lo + kernel).min(len);
                let mut best = lo;
                for i in lo + 1..hi {
                    if row[i] > row[best] {
                        best = i;
                    }
                }
                out.push(row[best]);
                argmax.push(r * len + best);
            }
        }
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = out_len;
        let v = Tensor::new(&shape, out)?;
        Ok(self.push(v, Op::MaxPool { x, argmax }, &[x]))
    }

    /// Upsamples every row of `x` (last axis length `m`) to `target_len`
    /// by piecewise-linear interpolation; see [`interpolate_linear`].
    pub fn interpolate_linear(&mut self, x: Var, target_len: usize) -> Result<Var> {
        let m = self.value(x).last_dim();
        if m == target_len {
            return Ok(x);
        }
        let basis = interpolation_matrix(m, target_len)?;
        let rows = self.value(x).rows();
        let lead = self.shape(x)[..self.shape(x).len() - 1].to_vec();
        let flat = self.reshape(x, &[rows, m])?;
        let b = self.constant(basis);
        let y = self.matmul(flat, b)?;
        let mut shape = lead;
        shape.push(target_len);
        self.reshape(y, &shape)
    }

    /// Softmax over the last axis. Entries where `mask` is `false` get
    /// probability exactly zero; every row must keep one allowed entry.
    pub fn softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let t = self.value(x);
        if let Some(m) = mask {
            if m.len() != t.len() {
                return Err(Error::shape("softmax", t.shape(), &[m.len()]));
            }
        }
        let d = t.last_dim();
        let mut out = vec![0.0; t.len()];
        for (r, row) in t.data().chunks(d).enumerate() {
            let allowed = |j: usize| mask.is_none_or(|m| m[r * d + j]);
            let max = (0..d)
                .filter(|&j| allowed(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::Contract(format!("softmax row {r} fully masked")));
            }
            let o = &mut out[r * d..(r + 1) * d];
            let mut total = 0.0;
            for j in 0..d {
                if allowed(j) {
                    o[j] = (row[j] - max).exp();
                    total += o[j];
                }
            }
            for e in o.iter_mut() {
                *e /= total;
            }
        }
        let v = Tensor::new(t.shape(), out)?;
        Ok(self.push(v, Op::Softmax(x), &[x]))
    }

    /// `out.flat[i] = x.flat[index[i]]`, reshaped to `shape`.
    pub fn gather(&mut self, x: Var, index: Rc<Vec<usize>>, shape: &[usize]) -> Result<Var> {
        let src = self.value(x).data();
        if let Some(&bad) = index.iter().find(|&&i| i >= src.len()) {
            return Err(Error::shape("gather", self.shape(x), &[bad]));
        }
        let data = index.iter().map(|&i| src[i]).collect();
        let v = Tensor::new(shape, data)?;
        Ok(self.push(v, Op::Gather { x, index }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).clone().reshape(shape)?;
        Ok(self.push(v, Op::Reshape(x), &[x]))
    }

    /// Rows `start..start + len` of a 2-d tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let d = self.value(x).last_dim();
        let index: Vec<usize> = (start * d..(start + len) * d).collect();
        self.gather(x, Rc::new(index), &[len, d])
    }

    /// Columns `start..start + len` of a 2-d tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (rows, d) = (t.rows(), t.last_dim());
        if start + len > d {
            return Err(Error::shape("slice_cols", t.shape(), &[start + len]));
        }
        let index: Vec<usize> = (0..rows)
            .flat_map(|r| (start..start + len).map(move |c| r * d + c))
            .collect();
        self.gather(x, Rc::new(index), &[rows, len])
    }

    /// Transpose of a 2-d tensor.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(Error::shape("transpose", &s, &[2]));
        }
        let (rows, cols) = (s[0], s[1]);
        let index: Vec<usize> = (0..cols)
            .flat_map(|c| (0..rows).map(move |r| r * cols + c))
            .collect();
        self.gather(x, Rc::new(index), &[cols, rows])
    }

    /// Concatenates 2-d tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(Error::shape(
                    "concat_cols",
                    self.shape(parts[0]),
                    self.shape(p),
                ));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).last_dim()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let v = Tensor::new(&[rows, total], out)?;
        Ok(self.push(v, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Concatenates 2-d tensors with equal widths along rows.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let d = self.value(parts[0]).last_dim();
        let mut out = Vec::new();
        for &p in parts {
            if self.value(p).last_dim() != d {
                return Err(Error::shape(
                    "concat_rows",
                    self.shape(parts[0]),
                    self.shape(p),
                ));
            }
            out.extend_from_slice(self.value(p).data());
        }
        let rows = out.len() / d;
        let v = Tensor::new(&[rows, d], out)?;
        Ok(self.push(v, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Multiplies each row of `a[n,d]` by the matching entry of `s[n,1]`.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Result<Var> {
        let (ta, ts) = (self.value(a), self.value(s));
        if ts.len() != ta.rows() {
            return Err(Error::shape("scale_rows", ta.shape(), ts.shape()));
        }
        let d = ta.last_dim();
        let data = ta
            .data()
            .chunks(d)
            .zip(ts.data())
            .flat_map(|(row, &k)| row.iter().map(move |x| x * k))
            .collect();
        let v = Tensor::new(ta.shape(), data)?;
        Ok(self.push(v, Op::ScaleRows(a, s), &[a, s]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        self.push(v, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let v = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(v, Op::Mean(x), &[x])
    }

    /// Inverted dropout: zeroes entries with probability `p` and rescales
    /// the survivors by `1 / (1 - p)`.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut impl Rng) -> Result<Var> {
        if p <= 0.0 {
            return Ok(x);
        }
        if p >= 1.0 {
            return Err(Error::Parameter(format!("dropout rate {p} must be < 1")));
        }
        let keep = 1.0 / (1.0 - p);
        let t = self.value(x);
        let data = (0..t.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let mask = Tensor::new(t.shape(), data)?;
        let m = self.constant(mask);
        self.mul(x, m)
    }

    /// Records a scalar `value` whose gradient w.r.t. `x` is `grad`.
    pub fn scalar_with_grad(&mut self, x: Var, value: f64, grad: Tensor) -> Result<Var> {
        if grad.shape() != self.shape(x) {
            return Err(Error::shape("scalar_with_grad", self.shape(x), grad.shape()));
        }
        Ok(self.push(Tensor::scalar(value), Op::ScalarWithGrad { x, grad }, &[x]))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(self.shape(loss)));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, contrib: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&contrib),
            slot => *slot = Some(contrib),
        }
    }

    fn like(&self, v: Var, data: Vec<f64>) -> Tensor {
        Tensor::new(self.shape(v), data).expect("gradient shape")
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let d = gd.iter().zip(self.value(*b).data()).map(|(x, y)| x * y);
                    self.accumulate(grads, *a, self.like(*a, d.collect()));
                }
                if self.needs(*b) {
                    let d = gd.iter().zip(self.value(*a).data()).map(|(x, y)| x * y);
                    self.accumulate(grads, *b, self.like(*b, d.collect()));
                }
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.needs(*row) {
                    let d = g.last_dim();
                    let mut acc = vec![0.0; d];
                    for chunk in gd.chunks(d) {
                        for (s, x) in acc.iter_mut().zip(chunk) {
                            *s += x;
                        }
                    }
                    self.accumulate(grads, *row, self.like(*row, acc));
                }
            }
            Op::Affine(x, scale) => {
                self.accumulate(grads, *x, g.map(|e| e * scale));
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (n, k, m) = (sa[0], sa[1], sb[1]);
                if self.needs(*a) {
                    // G[n,m] · Bᵀ[m,k]
                    let mut out = vec![0.0; n * k];
                    let b = self.value(*b).data();
                    gemm(n, m, k, gd, m as isize, 1, b, 1, m as isize, 0.0, &mut out);
                    self.accumulate(grads, *a, self.like(*a, out));
                }
                if self.needs(*b) {
                    // Aᵀ[k,n] · G[n,m]
                    let mut out = vec![0.0; k * m];
                    let a = self.value(*a).data();
                    gemm(k, n, m, a, 1, k as isize, gd, m as isize, 1, 0.0, &mut out);
                    self.accumulate(grads, *b, self.like(*b, out));
                }
            }
            Op::BatchMatMul { a, b, trans_b } => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (groups, n, k) = (sa[0], sa[1], sa[2]);
                let m = if *trans_b { sb[1] } else { sb[2] };
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    let mut out = vec![0.0; groups * n * k];
                    for gi in 0..groups {
                        let gg = &gd[gi * n * m..(gi + 1) * n * m];
                        let bb = &db[gi * k * m..(gi + 1) * k * m];
                        // G · Bᵀ where B is [k,m], or G · B where B is stored [m,k]
                        let (rs, cs) = if *trans_b { (k as isize, 1) } else { (1, m as isize) };
                        let o = &mut out[gi * n * k..(gi + 1) * n * k];
                        gemm(n, m, k, gg, m as isize, 1, bb, rs, cs, 0.0, o);
                    }
                    self.accumulate(grads, *a, self.like(*a, out));
                }
                if self.needs(*b) {
                    let mut out = vec![0.0; groups * k * m];
                    for gi in 0..groups {
                        let gg = &gd[gi * n * m..(gi + 1) * n * m];
                        let aa = &da[gi * n * k..(gi + 1) * n * k];
                        let o = &mut out[gi * k * m..(gi + 1) * k * m];
                        if *trans_b {
                            // Gᵀ[m,n] · A[n,k]
                            gemm(m, n, k, gg, 1, m as isize, aa, k as isize, 1, 0.0, o);
                        } else {
                            // Aᵀ[k,n] · G[n,m]
                            gemm(k, n, m, aa, 1, k as isize, gg, m as isize, 1, 0.0, o);
                        }
                    }
                    self.accumulate(grads, *b, self.like(*b, out));
                }
            }
            Op::Act(x, kind) => {
                let xs = self.value(*x).data();
                let ys = node.value.data();
                let d = gd
                    .iter()
                    .zip(xs.iter().zip(ys))
                    .map(|(g, (&x, &y))| g * kind.derivative(x, y))
                    .collect();
                self.accumulate(grads, *x, self.like(*x, d));
            }
            Op::Glu(x) => {
                let t = self.value(*x);
                let d2 = t.last_dim();
                let d = d2 / 2;
                let mut out = vec![0.0; t.len()];
                for (r, row) in t.data().chunks(d2).enumerate() {
                    for j in 0..d {
                        let s = sigmoid(row[d + j]);
                        let gj = gd[r * d + j];
                        out[r * d2 + j] = gj * s;
                        out[r * d2 + d + j] = gj * row[j] * s * (1.0 - s);
                    }
                }
                self.accumulate(grads, *x, self.like(*x, out));
            }
            Op::LayerNorm {
                x,
                gain,
                shift,
                normalized,
                inv_std,
            } => {
                let d = g.last_dim();
                let gv = self.value(*gain).data();
                if self.needs(*gain) || self.needs(*shift) {
                    let mut dg = vec![0.0; d];
                    let mut ds = vec![0.0; d];
                    for (gr, xr) in gd.chunks(d).zip(normalized.chunks(d)) {
                        for j in 0..d {
                            dg[j] += gr[j] * xr[j];
                            ds[j] += gr[j];
                        }
                    }
                    self.accumulate(grads, *gain, self.like(*gain, dg));
                    self.accumulate(grads, *shift, self.like(*shift, ds));
                }
                if self.needs(*x) {
                    let mut out = vec![0.0; g.len()];
                    for (r, (gr, xr)) in gd.chunks(d).zip(normalized.chunks(d)).enumerate() {
                        let gx: Vec<f64> = (0..d).map(|j| gr[j] * gv[j]).collect();
                        let sum_g: f64 = gx.iter().sum();
                        let sum_gx: f64 = gx.iter().zip(xr).map(|(a, b)| a * b).sum();
                        let scale = inv_std[r] / d as f64;
                        for j in 0..d {
                            out[r * d + j] = scale * (d as f64 * gx[j] - sum_g - xr[j] * sum_gx);
                        }
                    }
                    self.accumulate(grads, *x, self.like(*x, out));
                }
            }
            Op::MaxPool { x, argmax } => {
                let mut out = vec![0.0; self.value(*x).len()];
                for (&i, &gi) in argmax.iter().zip(gd) {
                    out[i] += gi;
                }
                self.accumulate(grads, *x, self.like(*x, out));
            }
            Op::Softmax(x) => {
                let d = g.last_dim();
                let mut out = vec![0.0; g.len()];
                for (r, (gr, yr)) in gd.chunks(d).zip(node.value.data().chunks(d)).enumerate() {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for j in 0..d {
                        out[r * d + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(grads, *x, self.like(*x, out));
            }
            Op::Gather { x, index } => {
                // Scatter straight into the parent's slot; slices of large
                // tensors would otherwise allocate a full-size buffer each.
                if self.needs(*x) {
                    let acc = grads[x.0].get_or_insert_with(|| Tensor::zeros(self.shape(*x)));
                    let data = acc.data_mut();
                    for (&i, &gi) in index.iter().zip(gd) {
                        data[i] += gi;
                    }
                }
            }
            Op::Reshape(x) => {
                self.accumulate(grads, *x, self.like(*x, gd.to_vec()));
            }
            Op::ConcatCols(parts) => {
                let total = g.last_dim();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).last_dim();
                    if self.needs(p) {
                        let out = gd
                            .chunks(total)
                            .flat_map(|row| row[offset..offset + w].iter().copied())
                            .collect();
                        self.accumulate(grads, p, self.like(p, out));
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.needs(p) {
                        self.accumulate(grads, p, self.like(p, gd[offset..offset + n].to_vec()));
                    }
                    offset += n;
                }
            }
            Op::ScaleRows(a, s) => {
                let (ta, ts) = (self.value(*a), self.value(*s));
                let d = ta.last_dim();
                if self.needs(*a) {
                    let out = gd
                        .chunks(d)
                        .zip(ts.data())
                        .flat_map(|(row, &k)| row.iter().map(move |x| x * k))
                        .collect();
                    self.accumulate(grads, *a, self.like(*a, out));
                }
                if self.needs(*s) {
                    let out = gd
                        .chunks(d)
                        .zip(ta.data().chunks(d))
                        .map(|(gr, ar)| gr.iter().zip(ar).map(|(x, y)| x * y).sum())
                        .collect();
                    self.accumulate(grads, *s, self.like(*s, out));
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, self.like(*x, vec![gd[0]; n]));
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, self.like(*x, vec![gd[0] / n as f64; n]));
            }
            Op::ScalarWithGrad { x, grad } => {
                self.accumulate(grads, *x, grad.map(|e| e * gd[0]));
            }
        }
    }
}

/// Non-overlapping max pooling with stride equal to `kernel`; a final
/// partial window is reduced over the elements it has.
pub fn max_pool_1d(series: &[f64], kernel: usize) -> Result<Vec<f64>> {
    if kernel == 0 {
        return Err(Error::Parameter("pooling kernel must be >= 1".into()));
    }
    Ok(series
        .chunks(kernel)
        .map(|w| w.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

/// `[m, target_len]` matrix `B` with `coarse · B` the piecewise-linear
/// interpolation of `m` knots spread uniformly over `[0, target_len - 1]`.
pub fn interpolation_matrix(m: usize, target_len: usize) -> Result<Tensor> {
    if m == 0 || target_len == 0 {
        return Err(Error::Parameter(
            "interpolation needs at least one knot and one output".into(),
        ));
    }
    let mut b = vec![0.0; m * target_len];
    for t in 0..target_len {
        if m == 1 {
            b[t] = 1.0;
            continue;
        }
        let pos = if target_len == 1 {
            0.0
        } else {
            t as f64 * (m - 1) as f64 / (target_len - 1) as f64
        };
        let lo = (pos.floor() as usize).min(m - 2);
        let frac = pos - lo as f64;
        b[lo * target_len + t] += 1.0 - frac;
        b[(lo + 1) * target_len + t] += frac;
    }
    Tensor::new(&[m, target_len], b)
}

/// Piecewise-linear upsampling of `coarse` to `target_len` points.
pub fn interpolate_linear(coarse: &[f64], target_len: usize) -> Result<Vec<f64>> {
    if coarse.len() == target_len {
        return Ok(coarse.to_vec());
    }
    let b = interpolation_matrix(coarse.len(), target_len)?;
    Ok((0..target_len)
        .map(|t| {
            coarse
                .iter()
                .enumerate()
                .map(|(i, c)| c * b.get2(i, t))
                .sum()
        })
        .collect())
}
