//! Reverse-mode differentiation over a linear record of tensor ops.
//!
//! Every op validates shapes up front (no implicit broadcasting) and rejects
//! non-finite outputs. With recording disabled the tape still evaluates
//! values but keeps no backward caches.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use crate::error::{shape_err, Error, Result};
use crate::kernels::{self, WkvState};
use crate::tensor::{unit_f64, ParamId, ParamStore, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Relu(Var),
    SquaredRelu(Var),
    Exp(Var),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Dropout(Var, Vec<f64>),
    Concat(Vec<Var>, Axis),
    Slice {
        x: Var,
        axis: Axis,
        start: usize,
    },
    Transpose(Var),
    BroadcastRows(Var),
    Sum(Var),
    MemoryFilter {
        p: Var,
        past: Var,
        future: Option<Var>,
        s1: usize,
        s2: usize,
    },
    Wkv {
        k: Var,
        v: Var,
        w: Var,
        u: Var,
    },
    Conv2d {
        x: Var,
        kernel: Var,
        bias: Var,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    /// Loss gradient w.r.t. the log-probabilities is computed in the forward
    /// pass by the alpha-beta recursion and cached.
    Ctc {
        logprobs: Var,
        grad: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered computation record.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    record: bool,
    params: Vec<(ParamId, Var)>,
    dropout_seed: u64,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// Recording tape; dropout masks are derived from seed 0.
    pub fn new() -> Self {
        Self::with_seed(0)
    }

    pub fn with_seed(seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            record: true,
            params: Vec::new(),
            dropout_seed: seed,
        }
    }

    /// Evaluation-only tape: values are computed, nothing is kept for backward.
    pub fn inference() -> Self {
        Self {
            record: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
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

    pub fn dims(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.dims()
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if value.data().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { op: op_name });
        }
        let op = if self.record { op } else { Op::Leaf };
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push("input", t, Op::Leaf)
    }

    /// Binds a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        if let Some(&(_, v)) = self.params.iter().find(|(p, _)| *p == id) {
            return Ok(v);
        }
        let v = self.push("param", store.get(id).to_tensor(), Op::Param(id))?;
        self.params.push((id, v));
        Ok(v)
    }

    fn mat_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        match self.dims(v) {
            [r, c] => Ok((*r, *c)),
            d => Err(shape_err(op, d, &[0, 0])),
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.dims(a) != self.dims(b) {
            return Err(shape_err(op, self.dims(a), self.dims(b)));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.mat_dims("matmul", a)?;
        let (k2, n) = self.mat_dims("matmul", b)?;
        if k != k2 {
            return Err(shape_err("matmul", self.dims(a), self.dims(b)));
        }
        let mut out = vec![0.0; m * n];
        {
            let av = self.value(a).data();
            let bv = self.value(b).data();
            for t in 0..m {
                kernels::vec_mat_acc(&av[t * k..(t + 1) * k], bv, &mut out[t * n..(t + 1) * n]);
            }
        }
        self.push("matmul", Tensor::matrix(m, n, out)?, Op::MatMul(a, b))
    }

    fn zip_with(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let dims = self.dims(a).to_vec();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(name, Tensor::new(dims, data)?, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, name: &'static str, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let dims = self.dims(x).to_vec();
        let data = self.value(x).data().iter().map(|&v| f(v)).collect();
        self.push(name, Tensor::new(dims, data)?, op)
    }

    /// `alpha · x + beta`.
    pub fn affine(&mut self, x: Var, alpha: f64, beta: f64) -> Result<Var> {
        self.map("affine", x, |v| alpha * v + beta, Op::Affine(x, alpha))
    }

    pub fn scale(&mut self, x: Var, alpha: f64) -> Result<Var> {
        self.affine(x, alpha, 0.0)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map("sigmoid", x, kernels::sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map("relu", x, kernels::relu, Op::Relu(x))
    }

    pub fn squared_relu(&mut self, x: Var) -> Result<Var> {
        self.map("squared_relu", x, |v| kernels::relu(v) * kernels::relu(v), Op::SquaredRelu(x))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.map("exp", x, libm::exp, Op::Exp(x))
    }

    fn row_softmax(data: &[f64], cols: usize, log: bool) -> Vec<f64> {
        let mut out = Vec::with_capacity(data.len());
        for row in data.chunks(cols) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| libm::exp(v - m)).sum();
            if log {
                let lse = m + libm::log(z);
                out.extend(row.iter().map(|v| v - lse));
            } else {
                out.extend(row.iter().map(|v| libm::exp(v - m) / z));
            }
        }
        out
    }

    /// Softmax of a 2-D tensor along `axis`.
    pub fn softmax(&mut self, x: Var, axis: Axis) -> Result<Var> {
        match axis {
            Axis::Cols => {
                let (r, c) = self.mat_dims("softmax", x)?;
                let data = Self::row_softmax(self.value(x).data(), c, false);
                self.push("softmax", Tensor::matrix(r, c, data)?, Op::Softmax(x))
            }
            Axis::Rows => {
                let xt = self.transpose(x)?;
                let s = self.softmax(xt, Axis::Cols)?;
                self.transpose(s)
            }
        }
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.mat_dims("log_softmax", x)?;
        let data = Self::row_softmax(self.value(x).data(), c, true);
        self.push("log_softmax", Tensor::matrix(r, c, data)?, Op::LogSoftmax(x))
    }

    /// Row-wise layer normalization with vector `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.mat_dims("layer_norm", x)?;
        if self.dims(gain) != [c] || self.dims(bias) != [c] {
            return Err(shape_err("layer_norm", self.dims(x), self.dims(gain)));
        }
        let xv = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![0.0; r * c];
        let mut rstd = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for t in 0..r {
            let row = &xv[t * c..(t + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let rs = 1.0 / libm::sqrt(var + kernels::LAYER_NORM_EPS);
            rstd[t] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[t * c + j] = h;
                out[t * c + j] = h * g[j] + b[j];
            }
        }
        self.push(
            "layer_norm",
            Tensor::matrix(r, c, out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        )
    }

    /// Inverted dropout. Identity (no node) when not training or `rate == 0`.
    pub fn dropout(&mut self, x: Var, rate: f64, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Contract(alloc::format!("dropout rate {rate} outside [0, 1)")));
        }
        let seed = self.dropout_seed;
        self.dropout_seed = self.dropout_seed.wrapping_add(1);
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let mask = dropout_mask(self.value(x).len(), rate, seed);
        let dims = self.dims(x).to_vec();
        let data = self.value(x).data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        self.push("dropout", Tensor::new(dims, data)?, Op::Dropout(x, mask))
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let (r0, c0) = self.mat_dims("concat", first)?;
        let mut dims_list = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.mat_dims("concat", p)?;
            let ok = match axis {
                Axis::Rows => c == c0,
                Axis::Cols => r == r0,
            };
            if !ok {
                return Err(shape_err("concat", self.dims(first), self.dims(p)));
            }
            dims_list.push((r, c));
        }
        let (rows, cols, data) = match axis {
            Axis::Rows => {
                let mut data = Vec::new();
                for &p in parts {
                    data.extend_from_slice(self.value(p).data());
                }
                (dims_list.iter().map(|d| d.0).sum(), c0, data)
            }
            Axis::Cols => {
                let cols: usize = dims_list.iter().map(|d| d.1).sum();
                let mut data = Vec::with_capacity(r0 * cols);
                for t in 0..r0 {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row(t));
                    }
                }
                (r0, cols, data)
            }
        };
        self.push("concat", Tensor::matrix(rows, cols, data)?, Op::Concat(parts.to_vec(), axis))
    }

    /// Rows or columns `[start, start + len)` of a 2-D tensor.
    pub fn slice(&mut self, x: Var, axis: Axis, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.mat_dims("slice", x)?;
        let limit = match axis {
            Axis::Rows => r,
            Axis::Cols => c,
        };
        if start + len > limit {
            return Err(shape_err("slice", &[r, c], &[start, len]));
        }
        let xv = self.value(x);
        let (rows, cols, data) = match axis {
            Axis::Rows => (len, c, xv.data()[start * c..(start + len) * c].to_vec()),
            Axis::Cols => {
                let mut d = Vec::with_capacity(r * len);
                for t in 0..r {
                    d.extend_from_slice(&xv.row(t)[start..start + len]);
                }
                (r, len, d)
            }
        };
        self.push("slice", Tensor::matrix(rows, cols, data)?, Op::Slice { x, axis, start })
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.mat_dims("transpose", x)?;
        let xv = self.value(x).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xv[i * c + j];
            }
        }
        self.push("transpose", Tensor::matrix(c, r, out)?, Op::Transpose(x))
    }

    /// Repeats a length-`n` vector into a `rows × n` matrix.
    pub fn broadcast_rows(&mut self, v: Var, rows: usize) -> Result<Var> {
        let n = match self.dims(v) {
            [n] => *n,
            d => return Err(shape_err("broadcast_rows", d, &[0])),
        };
        let src = self.value(v).data();
        let mut data = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            data.extend_from_slice(src);
        }
        self.push("broadcast_rows", Tensor::matrix(rows, n, data)?, Op::BroadcastRows(v))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len().max(1) as f64;
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n)
    }

    /// `x · W + b` for `x: T × in`, `W: in × out`, `b: out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => {
                let rows = self.dims(y)[0];
                let bb = self.broadcast_rows(b, rows)?;
                self.add(y, bb)
            }
            None => Ok(y),
        }
    }

    /// Elementwise product of each row with a vector.
    pub fn mul_rows(&mut self, x: Var, v: Var) -> Result<Var> {
        let rows = self.dims(x)[0];
        let vb = self.broadcast_rows(v, rows)?;
        self.mul(x, vb)
    }

    /// Previous-frame sequence `[0, x_0, …, x_{T-2}]` (token shift).
    pub fn shift_down(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.mat_dims("shift_down", x)?;
        let zero = self.input(Tensor::zeros(vec![1, c]))?;
        if r <= 1 {
            return if r == 1 { Ok(zero) } else { Ok(x) };
        }
        let head = self.slice(x, Axis::Rows, 0, r - 1)?;
        self.concat(&[zero, head], Axis::Rows)
    }

    /// FIR memory over past (`past: (N1+1) × d`, tap 0 = current frame) and
    /// future (`future: N2 × d`) frames with strides `s1`, `s2`.
    pub fn memory_filter(&mut self, p: Var, past: Var, future: Option<Var>, s1: usize, s2: usize) -> Result<Var> {
        let (t, d) = self.mat_dims("memory_filter", p)?;
        let (_, dp) = self.mat_dims("memory_filter", past)?;
        if dp != d {
            return Err(shape_err("memory_filter", self.dims(p), self.dims(past)));
        }
        if let Some(f) = future {
            let (_, df) = self.mat_dims("memory_filter", f)?;
            if df != d {
                return Err(shape_err("memory_filter", self.dims(p), self.dims(f)));
            }
        }
        if s1 == 0 || s2 == 0 {
            return Err(Error::Config("memory filter strides must be >= 1".into()));
        }
        let mut out = vec![0.0; t * d];
        let fut: &[f64] = match future {
            Some(f) => self.value(f).data(),
            None => &[],
        };
        kernels::memory_filter(self.value(p).data(), t, d, self.value(past).data(), fut, s1, s2, &mut out);
        self.push(
            "memory_filter",
            Tensor::matrix(t, d, out)?,
            Op::MemoryFilter {
                p,
                past,
                future,
                s1,
                s2,
            },
        )
    }

    /// WKV recurrence over a `T × d` key/value sequence with per-channel
    /// log-decay `w` (decay rate `exp(w)`) and bonus `u`.
    pub fn wkv(&mut self, k: Var, v: Var, w: Var, u: Var) -> Result<Var> {
        self.same_shape("wkv", k, v)?;
        let (t, d) = self.mat_dims("wkv", k)?;
        if self.dims(w) != [d] || self.dims(u) != [d] {
            return Err(shape_err("wkv", self.dims(k), self.dims(w)));
        }
        let decay: Vec<f64> = self.value(w).data().iter().map(|&x| libm::exp(x)).collect();
        let mut state = WkvState::new(d);
        let mut out = vec![0.0; t * d];
        {
            let kv = self.value(k).data();
            let vv = self.value(v).data();
            let uv = self.value(u).data();
            for s in 0..t {
                let r = s * d..(s + 1) * d;
                state.step(&kv[r.clone()], &vv[r.clone()], &decay, uv, &mut out[r]);
            }
        }
        self.push("wkv", Tensor::matrix(t, d, out)?, Op::Wkv { k, v, w, u })
    }

    /// 3×3 stride-2 unpadded convolution from one input plane to
    /// `channels` planes, flattened to `T' × (channels · F')`.
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (t, f) = self.mat_dims("conv2d", x)?;
        let (ch, nine) = self.mat_dims("conv2d", kernel)?;
        if nine != 9 || self.dims(bias) != [ch] {
            return Err(shape_err("conv2d", self.dims(kernel), self.dims(bias)));
        }
        let (to, fo) = match (kernels::conv_out_len(t), kernels::conv_out_len(f)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::TooShort(alloc::format!("conv2d needs at least 3×3 input, got {t}×{f}"))),
        };
        let mut out = vec![0.0; to * ch * fo];
        {
            let xv = self.value(x).data();
            let kv = self.value(kernel).data();
            let bv = self.value(bias).data();
            let w = ch * fo;
            for s in 0..to {
                kernels::conv2d_row(xv, f, s, kv, bv, &mut out[s * w..(s + 1) * w]);
            }
        }
        self.push("conv2d", Tensor::matrix(to, ch * fo, out)?, Op::Conv2d { x, kernel, bias })
    }

    /// Mean framewise cross-entropy of `logits: T × C` against class ids.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (t, c) = self.mat_dims("cross_entropy", logits)?;
        if labels.len() != t || t == 0 {
            return Err(shape_err("cross_entropy", &[t, c], &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Label { label: bad, classes: c });
        }
        let lv = self.value(logits).data();
        let logp = Self::row_softmax(lv, c, true);
        let loss = -labels.iter().enumerate().map(|(s, &l)| logp[s * c + l]).sum::<f64>() / t as f64;
        let probs = logp.iter().map(|&v| libm::exp(v)).collect();
        self.push(
            "cross_entropy",
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    /// CTC negative log-likelihood of `labels` (blank = 0) under normalized
    /// log-probabilities `T × (V+1)`.
    pub fn ctc(&mut self, logprobs: Var, labels: &[usize]) -> Result<Var> {
        let (loss, grad) = crate::heads::ctc::ctc_loss_and_grad(self.value(logprobs), labels)?;
        let grad = if self.record { grad } else { Vec::new() };
        self.push("ctc", Tensor::scalar(loss), Op::Ctc { logprobs, grad })
    }

    /// Gradients of a scalar `loss` with respect to every leaf and
    /// parameter it depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.record {
            return Err(Error::Contract("backward on a non-recording tape".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(alloc::format!(
                "backward needs a scalar loss, got dims {:?}",
                self.dims(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => out.leaves.push((Var(i), g)),
                Op::Param(id) => out.params.push((*id, g)),
                op => self.backprop_op(op, &node.value, &g, &mut grads)?,
            }
        }
        Ok(out)
    }

    fn backprop_op(&self, op: &Op, y: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let n = self.nodes[v.0].value.len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
            f(slot);
        };
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.dims(*a)[0], self.dims(*a)[1]);
                let n = self.dims(*b)[1];
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                acc(*a, &mut |ga| {
                    for t in 0..m {
                        for i in 0..k {
                            let brow = &bv[i * n..(i + 1) * n];
                            let grow = &g[t * n..(t + 1) * n];
                            ga[t * k + i] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for t in 0..m {
                        let grow = &g[t * n..(t + 1) * n];
                        for i in 0..k {
                            let a_ti = av[t * k + i];
                            for (o, &gj) in gb[i * n..(i + 1) * n].iter_mut().zip(grow) {
                                *o += a_ti * gj;
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| add_into(gb, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(o, x)| *o -= x));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                acc(*a, &mut |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(g).zip(bv) {
                        *o += x * y;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((o, x), y) in gb.iter_mut().zip(g).zip(av) {
                        *o += x * y;
                    }
                });
            }
            Op::Affine(x, alpha) => acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(o, v)| *o += alpha * v)),
            Op::Sigmoid(x) => acc(*x, &mut |gx| {
                for ((o, gv), yv) in gx.iter_mut().zip(g).zip(y.data()) {
                    *o += gv * yv * (1.0 - yv);
                }
            }),
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                acc(*x, &mut |gx| {
                    for ((o, gv), xv) in gx.iter_mut().zip(g).zip(xv) {
                        if *xv > 0.0 {
                            *o += gv;
                        }
                    }
                });
            }
            Op::SquaredRelu(x) => {
                let xv = self.value(*x).data();
                acc(*x, &mut |gx| {
                    for ((o, gv), xv) in gx.iter_mut().zip(g).zip(xv) {
                        *o += 2.0 * kernels::relu(*xv) * gv;
                    }
                });
            }
            Op::Exp(x) => acc(*x, &mut |gx| {
                for ((o, gv), yv) in gx.iter_mut().zip(g).zip(y.data()) {
                    *o += gv * yv;
                }
            }),
            Op::Softmax(x) => {
                let c = y.cols();
                acc(*x, &mut |gx| {
                    for ((o, gr), yr) in gx.chunks_mut(c).zip(g.chunks(c)).zip(y.data().chunks(c)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((o, gv), yv) in o.iter_mut().zip(gr).zip(yr) {
                            *o += yv * (gv - dot);
                        }
                    }
                });
            }
            Op::LogSoftmax(x) => {
                let c = y.cols();
                acc(*x, &mut |gx| {
                    for ((o, gr), yr) in gx.chunks_mut(c).zip(g.chunks(c)).zip(y.data().chunks(c)) {
                        let total: f64 = gr.iter().sum();
                        for ((o, gv), yv) in o.iter_mut().zip(gr).zip(yr) {
                            *o += gv - libm::exp(*yv) * total;
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let c = y.cols();
                let gv = self.value(*gain).data();
                acc(*gain, &mut |gg| {
                    for (gr, hr) in g.chunks(c).zip(xhat.chunks(c)) {
                        for ((o, a), b) in gg.iter_mut().zip(gr).zip(hr) {
                            *o += a * b;
                        }
                    }
                });
                acc(*bias, &mut |gb| {
                    for gr in g.chunks(c) {
                        add_into(gb, gr);
                    }
                });
                acc(*x, &mut |gx| {
                    for (t, ((o, gr), hr)) in gx.chunks_mut(c).zip(g.chunks(c)).zip(xhat.chunks(c)).enumerate() {
                        let mut m1 = 0.0;
                        let mut m2 = 0.0;
                        for j in 0..c {
                            let dh = gr[j] * gv[j];
                            m1 += dh;
                            m2 += dh * hr[j];
                        }
                        m1 /= c as f64;
                        m2 /= c as f64;
                        for j in 0..c {
                            let dh = gr[j] * gv[j];
                            o[j] += rstd[t] * (dh - m1 - hr[j] * m2);
                        }
                    }
                });
            }
            Op::Dropout(x, mask) => acc(*x, &mut |gx| {
                for ((o, gv), m) in gx.iter_mut().zip(g).zip(mask) {
                    *o += gv * m;
                }
            }),
            Op::Concat(parts, axis) => {
                let cols = y.cols();
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = (self.dims(p)[0], self.dims(p)[1]);
                    match axis {
                        Axis::Rows => {
                            let s = &g[offset * cols..(offset + pr) * cols];
                            acc(p, &mut |gp| add_into(gp, s));
                            offset += pr;
                        }
                        Axis::Cols => {
                            acc(p, &mut |gp| {
                                for t in 0..pr {
                                    add_into(&mut gp[t * pc..(t + 1) * pc], &g[t * cols + offset..t * cols + offset + pc]);
                                }
                            });
                            offset += pc;
                        }
                    }
                }
            }
            Op::Slice { x, axis, start } => {
                let xc = self.dims(*x)[1];
                let (r, c) = (y.rows(), y.cols());
                acc(*x, &mut |gx| match axis {
                    Axis::Rows => add_into(&mut gx[start * xc..(start + r) * xc], g),
                    Axis::Cols => {
                        for t in 0..r {
                            add_into(&mut gx[t * xc + start..t * xc + start + c], &g[t * c..(t + 1) * c]);
                        }
                    }
                });
            }
            Op::Transpose(x) => {
                let (r, c) = (self.dims(*x)[0], self.dims(*x)[1]);
                acc(*x, &mut |gx| {
                    for i in 0..r {
                        for j in 0..c {
                            gx[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::BroadcastRows(v) => {
                let n = self.value(*v).len();
                acc(*v, &mut |gv| {
                    for gr in g.chunks(n) {
                        add_into(gv, gr);
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |gx| gx.iter_mut().for_each(|o| *o += g[0])),
            Op::MemoryFilter {
                p,
                past,
                future,
                s1,
                s2,
            } => {
                let (t_len, d) = (self.dims(*p)[0], self.dims(*p)[1]);
                let pv = self.value(*p).data();
                let pt = self.value(*past).data();
                let ft: &[f64] = future.map_or(&[], |f| self.value(f).data());
                let (n1, n2) = (pt.len() / d, ft.len() / d);
                let mut gp = vec![0.0; pv.len()];
                let mut gpast = vec![0.0; pt.len()];
                let mut gfut = vec![0.0; ft.len()];
                for t in 0..t_len {
                    let gr = &g[t * d..(t + 1) * d];
                    for i in 0..n1 {
                        let Some(src) = t.checked_sub(s1 * i) else { break };
                        for c in 0..d {
                            gp[src * d + c] += pt[i * d + c] * gr[c];
                            gpast[i * d + c] += pv[src * d + c] * gr[c];
                        }
                    }
                    for j in 1..=n2 {
                        let src = t + s2 * j;
                        if src >= t_len {
                            break;
                        }
                        for c in 0..d {
                            gp[src * d + c] += ft[(j - 1) * d + c] * gr[c];
                            gfut[(j - 1) * d + c] += pv[src * d + c] * gr[c];
                        }
                    }
                }
                acc(*p, &mut |o| add_into(o, &gp));
                acc(*past, &mut |o| add_into(o, &gpast));
                if let Some(f) = future {
                    acc(*f, &mut |o| add_into(o, &gfut));
                }
            }
            Op::Wkv { k, v, w, u } => {
                let (gk, gv, gw, gu) = wkv_backward(
                    self.value(*k),
                    self.value(*v),
                    self.value(*w).data(),
                    self.value(*u).data(),
                    g,
                );
                acc(*k, &mut |o| add_into(o, &gk));
                acc(*v, &mut |o| add_into(o, &gv));
                acc(*w, &mut |o| add_into(o, &gw));
                acc(*u, &mut |o| add_into(o, &gu));
            }
            Op::Conv2d { x, kernel, bias } => {
                let f = self.dims(*x)[1];
                let xv = self.value(*x).data();
                let kv = self.value(*kernel).data();
                let ch = self.dims(*bias)[0];
                let fo = (f - 3) / 2 + 1;
                let to = y.rows();
                let mut gx = vec![0.0; xv.len()];
                let mut gk = vec![0.0; kv.len()];
                let mut gb = vec![0.0; ch];
                for s in 0..to {
                    for c in 0..ch {
                        for q in 0..fo {
                            let gval = g[s * ch * fo + c * fo + q];
                            gb[c] += gval;
                            for a in 0..3 {
                                for b in 0..3 {
                                    let xi = (2 * s + a) * f + 2 * q + b;
                                    gk[c * 9 + 3 * a + b] += gval * xv[xi];
                                    gx[xi] += gval * kv[c * 9 + 3 * a + b];
                                }
                            }
                        }
                    }
                }
                acc(*x, &mut |o| add_into(o, &gx));
                acc(*kernel, &mut |o| add_into(o, &gk));
                acc(*bias, &mut |o| add_into(o, &gb));
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let c = self.dims(*logits)[1];
                let scale = g[0] / labels.len() as f64;
                acc(*logits, &mut |gl| {
                    for (s, &l) in labels.iter().enumerate() {
                        for j in 0..c {
                            let target = if j == l { 1.0 } else { 0.0 };
                            gl[s * c + j] += scale * (probs[s * c + j] - target);
                        }
                    }
                });
            }
            Op::Ctc { logprobs, grad } => acc(*logprobs, &mut |gl| {
                for (o, d) in gl.iter_mut().zip(grad) {
                    *o += g[0] * d;
                }
            }),
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Keep/scale mask for inverted dropout; reproducible from `seed`.
pub fn dropout_mask(n: usize, rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| if unit_f64(&mut rng) < rate { 0.0 } else { keep })
        .collect()
}

/// Exact gradient of the WKV ratio through its direct softmax-weighted form:
/// `wkv_t = Σ_i α_ti v_i` with scores `k_i - (t-1-i)·exp(w)` for `i < t` and
/// `u + k_t` for `i = t`.
fn wkv_backward(k: &Tensor, v: &Tensor, w: &[f64], u: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let (t_len, d) = (k.rows(), k.cols());
    let (kv, vv) = (k.data(), v.data());
    let mut gk = vec![0.0; t_len * d];
    let mut gv = vec![0.0; t_len * d];
    let mut gw = vec![0.0; d];
    let mut gu = vec![0.0; d];
    let mut scores = vec![0.0; t_len];
    for c in 0..d {
        let ew = libm::exp(w[c]);
        let mut g_ew = 0.0;
        for t in 0..t_len {
            let gt = g[t * d + c];
            if gt == 0.0 {
                continue;
            }
            let mut m = f64::NEG_INFINITY;
            for i in 0..=t {
                let s = if i == t {
                    u[c] + kv[t * d + c]
                } else {
                    kv[i * d + c] - (t - 1 - i) as f64 * ew
                };
                scores[i] = s;
                m = m.max(s);
            }
            let mut z = 0.0;
            for s in scores[..=t].iter_mut() {
                *s = libm::exp(*s - m);
                z += *s;
            }
            let mut out = 0.0;
            for i in 0..=t {
                scores[i] /= z;
                out += scores[i] * vv[i * d + c];
            }
            for i in 0..=t {
                let a = scores[i];
                gv[i * d + c] += a * gt;
                let ds = a * (vv[i * d + c] - out) * gt;
                gk[i * d + c] += ds;
                if i == t {
                    gu[c] += ds;
                } else {
                    g_ew -= (t - 1 - i) as f64 * ds;
                }
            }
        }
        gw[c] = g_ew * ew;
    }
    (gk, gv, gw, gu)
}

/// Result of [`Tape::backward`].
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    leaves: Vec<(Var, Vec<f64>)>,
    params: Vec<(ParamId, Vec<f64>)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.leaves.iter().find(|(x, _)| *x == v).map(|(_, g)| g.as_slice())
    }

    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params.iter().find(|(x, _)| *x == id).map(|(_, g)| g.as_slice())
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.params.iter().map(|(id, g)| (*id, g.as_slice()))
    }

    /// Adds parameter gradients into the store's grad buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (id, g) in &self.params {
            let p = store.get_mut(*id);
            match &mut p.grad {
                Some(buf) => add_into(buf, g),
                None => p.grad = Some(g.clone()),
            }
        }
    }
}
