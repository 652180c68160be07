//! Reverse-mode differentiation over a fixed graph of array operations.
//!
//! A [`Graph`] is built once from [`Op`]s that refer to earlier nodes, then
//! evaluated repeatedly: [`Graph::forward`] computes every node value, and
//! [`Graph::backward`] propagates the adjoint of a scalar node back to the
//! [`ParamSet`] gradients. Input nodes can be refreshed between passes
//! without rebuilding the graph.
//!
//! Only the operations needed by the encoder exist; there is no control flow
//! and no higher-order differentiation.
//!
//! Batched data is feature-major: an array of `n` samples with `d` features
//! is `d` consecutive planes of length `n`.

mod adam;

pub use adam::Adam;

use crate::error::{Error, Result};
use crate::laplace;
use crate::upsample;

/// Handle to a parameter inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// A trainable array and its gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Parameter {
    pub fn new(values: Vec<f64>) -> Self {
        let grad = vec![0.0; values.len()];
        Self { values, grad }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, values: Vec<f64>) -> ParamId {
        self.params.push(Parameter::new(values));
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Snapshot of all parameter values.
    pub fn values(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|p| p.values.clone()).collect()
    }

    pub fn restore(&mut self, values: &[Vec<f64>]) {
        for (p, v) in self.params.iter_mut().zip(values) {
            p.values.copy_from_slice(v);
        }
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Graph operations. Shapes are implied by the flat lengths of the operands.
#[derive(Clone, Debug)]
pub enum Op {
    /// Current values of a parameter.
    Param(ParamId),
    /// Externally supplied array of fixed length; receives no gradient.
    Input(usize),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Elementwise `max(x, 0)`; the derivative at 0 is 0.
    Relu(NodeId),
    /// `w x + b` for every sample of the feature-major `x` (`in_dim`
    /// planes); `w` is `out_dim × in_dim`, row-major. The result has
    /// `out_dim` planes.
    Affine {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        in_dim: usize,
        out_dim: usize,
    },
    /// Bicubic ×2 upsampling of an `h × w` grid, cropped to `out_h × out_w`.
    Upsample2x {
        x: NodeId,
        h: usize,
        w: usize,
        out_h: usize,
        out_w: usize,
    },
    Slice { x: NodeId, start: usize, len: usize },
    /// `out[i] = x[index[i]]`, or 0 where the index is `None`.
    Gather { x: NodeId, index: Vec<Option<usize>> },
    /// Concatenates arrays; equal-length inputs become feature planes.
    Concat(Vec<NodeId>),
    /// Sum of all elements.
    Sum(NodeId),
    /// Mean squared difference to a fixed target.
    Mse { pred: NodeId, target: Vec<f64> },
    /// `Σ -log2 p(v)` with `p` the Laplace mass of `[v - 0.5, v + 0.5]`,
    /// floored at 2^-16. `params` holds a plane of means followed by a
    /// plane of log-scales.
    LaplaceBits { values: NodeId, params: NodeId },
}

#[derive(Debug)]
pub struct Graph {
    ops: Vec<Op>,
    values: Vec<Vec<f64>>,
    adjoints: Vec<Vec<f64>>,
    /// Per-node derivatives saved by the forward pass (Laplace terms only).
    saved: Vec<Vec<f64>>,
    evaluated: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            ops: Vec::new(),
            values: Vec::new(),
            adjoints: Vec::new(),
            saved: Vec::new(),
            evaluated: false,
        }
    }

    fn len_of(&self, n: NodeId) -> usize {
        self.values[n.0].len()
    }

    /// Appends an operation. Shapes are checked against the current
    /// parameter sizes.
    pub fn push(&mut self, op: Op, params: &ParamSet) -> Result<NodeId> {
        let bad = |msg: String| Err(Error::DimensionMismatch(msg));
        let len = match &op {
            Op::Param(p) => params.get(*p).len(),
            Op::Input(n) => *n,
            Op::Add(a, b) | Op::Mul(a, b) => {
                if self.len_of(*a) != self.len_of(*b) {
                    return bad(format!("elementwise operands of length {} and {}", self.len_of(*a), self.len_of(*b)));
                }
                self.len_of(*a)
            }
            Op::Scale(a, _) | Op::Relu(a) => self.len_of(*a),
            Op::Affine { x, w, b, in_dim, out_dim } => {
                if self.len_of(*x) % in_dim != 0 || self.len_of(*w) != in_dim * out_dim || self.len_of(*b) != *out_dim {
                    return bad(format!("affine {in_dim}->{out_dim} with incompatible operands"));
                }
                self.len_of(*x) / in_dim * out_dim
            }
            Op::Upsample2x { x, h, w, out_h, out_w } => {
                if self.len_of(*x) != h * w || *out_h > 2 * h || *out_h + 1 < 2 * h || *out_w > 2 * w || *out_w + 1 < 2 * w || *h == 0 || *w == 0 {
                    return bad(format!("upsample {h}x{w} -> {out_h}x{out_w}"));
                }
                out_h * out_w
            }
            Op::Slice { x, start, len } => {
                if start + len > self.len_of(*x) {
                    return bad("slice out of range".into());
                }
                *len
            }
            Op::Gather { x, index } => {
                let n = self.len_of(*x);
                if index.iter().flatten().any(|&i| i >= n) {
                    return bad("gather index out of range".into());
                }
                index.len()
            }
            Op::Concat(inputs) => inputs.iter().map(|i| self.len_of(*i)).sum(),
            Op::Sum(_) => 1,
            Op::Mse { pred, target } => {
                if self.len_of(*pred) != target.len() || target.is_empty() {
                    return bad("mse target length".into());
                }
                1
            }
            Op::LaplaceBits { values, params } => {
                if 2 * self.len_of(*values) != self.len_of(*params) {
                    return bad("laplace parameters must be a mean plane and a log-scale plane".into());
                }
                1
            }
        };
        self.ops.push(op);
        self.values.push(vec![0.0; len]);
        self.adjoints.push(vec![0.0; len]);
        self.saved.push(Vec::new());
        self.evaluated = false;
        Ok(NodeId(self.ops.len() - 1))
    }

    /// Replaces the contents of an input node.
    pub fn set_input(&mut self, node: NodeId, data: &[f64]) -> Result<()> {
        match self.ops.get(node.0) {
            Some(Op::Input(n)) if *n == data.len() => {
                self.values[node.0].copy_from_slice(data);
                self.evaluated = false;
                Ok(())
            }
            Some(Op::Input(n)) => Err(Error::DimensionMismatch(format!("input expects {n} values, got {}", data.len()))),
            _ => Err(Error::invalid("node is not an input")),
        }
    }

    pub fn value(&self, node: NodeId) -> &[f64] {
        &self.values[node.0]
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, node: NodeId) -> f64 {
        self.values[node.0][0]
    }

    pub fn forward(&mut self, params: &ParamSet) -> Result<()> {
        for i in 0..self.ops.len() {
            let mut out = std::mem::take(&mut self.values[i]);
            let mut saved = std::mem::take(&mut self.saved[i]);
            self.eval(i, params, &mut out, &mut saved)?;
            self.values[i] = out;
            self.saved[i] = saved;
        }
        self.evaluated = true;
        Ok(())
    }

    fn eval(&self, i: usize, params: &ParamSet, out: &mut [f64], saved: &mut Vec<f64>) -> Result<()> {
        let v = |n: &NodeId| self.values[n.0].as_slice();
        match &self.ops[i] {
            Op::Param(p) => {
                let src = &params.get(*p).values;
                if src.len() != out.len() {
                    return Err(Error::DimensionMismatch("parameter resized after graph construction".into()));
                }
                out.copy_from_slice(src);
            }
            Op::Input(_) => {}
            Op::Add(a, b) => {
                for ((o, x), y) in out.iter_mut().zip(v(a)).zip(v(b)) {
                    *o = x + y;
                }
            }
            Op::Mul(a, b) => {
                for ((o, x), y) in out.iter_mut().zip(v(a)).zip(v(b)) {
                    *o = x * y;
                }
            }
            Op::Scale(a, c) => {
                for (o, x) in out.iter_mut().zip(v(a)) {
                    *o = c * x;
                }
            }
            Op::Relu(a) => {
                for (o, x) in out.iter_mut().zip(v(a)) {
                    *o = x.max(0.0);
                }
            }
            Op::Affine { x, w, b, in_dim, .. } => affine_forward(v(x), v(w), v(b), *in_dim, out),
            Op::Upsample2x { x, h, w, out_h, out_w } => {
                out.copy_from_slice(&upsample::upsample_x2(v(x), *h, *w, *out_h, *out_w)?);
            }
            Op::Slice { x, start, len } => out.copy_from_slice(&v(x)[*start..start + len]),
            Op::Gather { x, index } => {
                let x = v(x);
                for (o, idx) in out.iter_mut().zip(index) {
                    *o = idx.map_or(0.0, |i| x[i]);
                }
            }
            Op::Concat(inputs) => {
                let mut at = 0;
                for n in inputs {
                    let src = v(n);
                    out[at..at + src.len()].copy_from_slice(src);
                    at += src.len();
                }
            }
            Op::Sum(a) => out[0] = v(a).iter().sum(),
            Op::Mse { pred, target } => {
                let s: f64 = v(pred).iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
                out[0] = s / target.len() as f64;
            }
            Op::LaplaceBits { values, params } => {
                // Derivatives are kept as (value, mu, log-scale) triples.
                saved.clear();
                let mut bits = 0.0;
                let (vals, mp) = (v(values), v(params));
                let (mus, log_scales) = mp.split_at(vals.len());
                for ((&val, &mu), &ls) in vals.iter().zip(mus).zip(log_scales) {
                    let r = laplace::bin_bits_with_grad(val, mu, ls);
                    bits += r.bits;
                    saved.extend([r.d_value, r.d_mu, r.d_log_scale]);
                }
                out[0] = bits;
            }
        }
        Ok(())
    }

    /// Accumulates `∂loss/∂value` into the gradient of every parameter
    /// reachable from `loss`, which must be a one-element node.
    pub fn backward(&mut self, loss: NodeId, params: &mut ParamSet) -> Result<()> {
        if !self.evaluated {
            return Err(Error::GraphNotEvaluated);
        }
        if self.values[loss.0].len() != 1 {
            return Err(Error::invalid("backward needs a scalar loss"));
        }
        for a in &mut self.adjoints[..=loss.0] {
            a.iter_mut().for_each(|g| *g = 0.0);
        }
        self.adjoints[loss.0][0] = 1.0;
        for i in (0..=loss.0).rev() {
            let grad = std::mem::take(&mut self.adjoints[i]);
            if grad.iter().any(|&g| g != 0.0) {
                self.propagate(i, &grad, params);
            }
            self.adjoints[i] = grad;
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &[f64], params: &mut ParamSet) {
        let ops = std::mem::take(&mut self.ops);
        let values = &self.values;
        let adj = &mut self.adjoints;
        match &ops[i] {
            Op::Param(p) => {
                for (d, s) in params.get_mut(*p).grad.iter_mut().zip(g) {
                    *d += s;
                }
            }
            Op::Input(_) => {}
            Op::Add(a, b) => {
                add_into(&mut adj[a.0], g);
                add_into(&mut adj[b.0], g);
            }
            Op::Mul(a, b) => {
                let da: Vec<f64> = g.iter().zip(&values[b.0]).map(|(g, y)| g * y).collect();
                let db: Vec<f64> = g.iter().zip(&values[a.0]).map(|(g, x)| g * x).collect();
                add_into(&mut adj[a.0], &da);
                add_into(&mut adj[b.0], &db);
            }
            Op::Scale(a, c) => {
                for (d, s) in adj[a.0].iter_mut().zip(g) {
                    *d += c * s;
                }
            }
            Op::Relu(a) => {
                for ((d, s), x) in adj[a.0].iter_mut().zip(g).zip(&values[a.0]) {
                    if *x > 0.0 {
                        *d += s;
                    }
                }
            }
            Op::Affine { x, w, b, in_dim, out_dim } => {
                let mut dx = std::mem::take(&mut adj[x.0]);
                let mut dw = std::mem::take(&mut adj[w.0]);
                let mut db = std::mem::take(&mut adj[b.0]);
                affine_backward(&values[x.0], &values[w.0], g, *in_dim, *out_dim, &mut dx, &mut dw, &mut db);
                adj[x.0] = dx;
                adj[w.0] = dw;
                adj[b.0] = db;
            }
            Op::Upsample2x { x, h, w, out_h, out_w } => {
                let back = upsample::upsample_x2_adjoint(g, *h, *w, *out_h, *out_w);
                add_into(&mut adj[x.0], &back);
            }
            Op::Slice { x, start, len } => add_into(&mut adj[x.0][*start..start + len], g),
            Op::Gather { x, index } => {
                let dst = &mut adj[x.0];
                for (s, idx) in g.iter().zip(index) {
                    if let Some(i) = idx {
                        dst[*i] += s;
                    }
                }
            }
            Op::Concat(inputs) => {
                let mut at = 0;
                for n in inputs {
                    let len = adj[n.0].len();
                    add_into(&mut adj[n.0], &g[at..at + len]);
                    at += len;
                }
            }
            Op::Sum(a) => {
                for d in adj[a.0].iter_mut() {
                    *d += g[0];
                }
            }
            Op::Mse { pred, target } => {
                let k = 2.0 * g[0] / target.len() as f64;
                for ((d, p), t) in adj[pred.0].iter_mut().zip(&values[pred.0]).zip(target) {
                    *d += k * (p - t);
                }
            }
            Op::LaplaceBits { values: vn, params: pn } => {
                let mut dv = std::mem::take(&mut adj[vn.0]);
                let mut dp = std::mem::take(&mut adj[pn.0]);
                let (dmu, dls) = dp.split_at_mut(dv.len());
                for (((r, d), m), l) in self.saved[i].chunks_exact(3).zip(dv.iter_mut()).zip(dmu).zip(dls) {
                    *d += g[0] * r[0];
                    *m += g[0] * r[1];
                    *l += g[0] * r[2];
                }
                adj[vn.0] = dv;
                adj[pn.0] = dp;
            }
        }
        self.ops = ops;
    }
}

/// Samples per cache block in the affine kernels.
const BLOCK: usize = 256;

// The kernels are compiled twice: for the baseline target and with AVX
// enabled, picked at run time. AVX only widens the vectors; without FMA the
// arithmetic and its order are unchanged, so both give identical results.

fn affine_forward(x: &[f64], w: &[f64], b: &[f64], in_dim: usize, out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: AVX support was just checked.
        return unsafe { affine_forward_avx(x, w, b, in_dim, out) };
    }
    affine_forward_impl(x, w, b, in_dim, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn affine_forward_avx(x: &[f64], w: &[f64], b: &[f64], in_dim: usize, out: &mut [f64]) {
    affine_forward_impl(x, w, b, in_dim, out)
}

#[inline(always)]
fn affine_forward_impl(x: &[f64], w: &[f64], b: &[f64], in_dim: usize, out: &mut [f64]) {
    let n = x.len() / in_dim;
    for start in (0..n).step_by(BLOCK) {
        let end = (start + BLOCK).min(n);
        for (o, (wr, &bo)) in w.chunks_exact(in_dim).zip(b).enumerate() {
            let dst = &mut out[o * n + start..o * n + end];
            dst.fill(bo);
            for (k, &wk) in wr.iter().enumerate() {
                for (d, &xv) in dst.iter_mut().zip(&x[k * n + start..k * n + end]) {
                    *d += wk * xv;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn affine_backward(x: &[f64], w: &[f64], g: &[f64], in_dim: usize, out_dim: usize, dx: &mut [f64], dw: &mut [f64], db: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: AVX support was just checked.
        return unsafe { affine_backward_avx(x, w, g, in_dim, out_dim, dx, dw, db) };
    }
    affine_backward_impl(x, w, g, in_dim, out_dim, dx, dw, db)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
#[allow(clippy::too_many_arguments)]
unsafe fn affine_backward_avx(x: &[f64], w: &[f64], g: &[f64], in_dim: usize, out_dim: usize, dx: &mut [f64], dw: &mut [f64], db: &mut [f64]) {
    affine_backward_impl(x, w, g, in_dim, out_dim, dx, dw, db)
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn affine_backward_impl(x: &[f64], w: &[f64], g: &[f64], in_dim: usize, out_dim: usize, dx: &mut [f64], dw: &mut [f64], db: &mut [f64]) {
    let n = x.len() / in_dim;
    for start in (0..n).step_by(BLOCK) {
        let end = (start + BLOCK).min(n);
        for o in 0..out_dim {
            let go = &g[o * n + start..o * n + end];
            db[o] += sum(go);
            for k in 0..in_dim {
                let wk = w[o * in_dim + k];
                let xs = &x[k * n + start..k * n + end];
                dw[o * in_dim + k] += dot(go, xs);
                for (d, &gv) in dx[k * n + start..k * n + end].iter_mut().zip(go) {
                    *d += wk * gv;
                }
            }
        }
    }
}

/// `Σ a_i b_i` with four interleaved partial sums.
#[inline(always)]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let tail = a.len() - a.len() % 4;
    for (ca, cb) in a[..tail].chunks_exact(4).zip(b[..tail].chunks_exact(4)) {
        for t in 0..4 {
            acc[t] += ca[t] * cb[t];
        }
    }
    let rest: f64 = a[tail..].iter().zip(&b[tail..]).map(|(p, q)| p * q).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rest
}

#[inline(always)]
fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let tail = a.len() - a.len() % 4;
    for c in a[..tail].chunks_exact(4) {
        for t in 0..4 {
            acc[t] += c[t];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + a[tail..].iter().sum::<f64>()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests;
