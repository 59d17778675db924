//! Tape-based reverse-mode differentiation.
//!
//! A tape is rebuilt for every forward pass. Nodes are appended in
//! evaluation order, so the graph is acyclic by construction and a single
//! reverse sweep computes all gradients.

use super::ops::{
    gelu_grad, gelu_scalar, gemm, mmd_backward, mmd_forward, spectral_backward, spectral_check,
    spectral_forward, Op,
};
use super::{fft, Error, Result, Tensor};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Index of a node on its tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

enum Value {
    Owned(Tensor),
    Shared(Arc<Tensor>),
}

impl Value {
    fn get(&self) -> &Tensor {
        match self {
            Value::Owned(t) => t,
            Value::Shared(t) => t,
        }
    }
}

struct Node {
    op: Op,
    value: Value,
    /// Name of the trainable parameter this leaf mirrors, if any.
    param: Option<String>,
    /// True when a trainable leaf is reachable from this node.
    needs_grad: bool,
}

/// Gradients keyed by parameter name.
pub type GradMap = BTreeMap<String, Tensor>;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        self.nodes[id.0].value.get()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        let mut needs = false;
        op.for_each_input(|i| needs |= self.nodes[i.0].needs_grad);
        self.nodes.push(Node {
            op,
            value: Value::Owned(value),
            param: None,
            needs_grad: needs,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: Value::Owned(t),
            param: None,
            needs_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Non-trainable leaf sharing an existing allocation.
    pub fn constant_shared(&mut self, t: Arc<Tensor>) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: Value::Shared(t),
            param: None,
            needs_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Trainable leaf; `backward` reports its gradient under `name`.
    pub fn param(&mut self, name: impl Into<String>, t: Arc<Tensor>) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: Value::Shared(t),
            param: Some(name.into()),
            needs_grad: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.value(id).shape()
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn rows_cols(&self, op: &'static str, id: NodeId) -> Result<(usize, usize)> {
        let s = self.shape(id);
        if s.len() != 2 {
            return Err(Error::Invalid(format!("{op}: expected 2-D tensor, got {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x * c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::AddScalar(a, c), v)
    }

    pub fn add_row_vec(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        let (r, c) = self.rows_cols("add_row_vec", x)?;
        if self.shape(v) != [c] {
            return Err(Error::ShapeMismatch {
                op: "add_row_vec",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(v).to_vec(),
            });
        }
        let vd = self.value(v).data();
        let mut out = self.value(x).data().to_vec();
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] += vd[j];
            }
        }
        let t = Tensor::new(vec![r, c], out)?;
        Ok(self.push(Op::AddRowVec(x, v), t))
    }

    pub fn mul_row_vec(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        let (r, c) = self.rows_cols("mul_row_vec", x)?;
        if self.shape(v) != [c] {
            return Err(Error::ShapeMismatch {
                op: "mul_row_vec",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(v).to_vec(),
            });
        }
        let vd = self.value(v).data();
        let mut out = self.value(x).data().to_vec();
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] *= vd[j];
            }
        }
        let t = Tensor::new(vec![r, c], out)?;
        Ok(self.push(Op::MulRowVec(x, v), t))
    }

    pub fn add_col_vec(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        let (r, c) = self.rows_cols("add_col_vec", x)?;
        if self.shape(v) != [r] {
            return Err(Error::ShapeMismatch {
                op: "add_col_vec",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(v).to_vec(),
            });
        }
        let vd = self.value(v).data();
        let mut out = self.value(x).data().to_vec();
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] += vd[i];
            }
        }
        let t = Tensor::new(vec![r, c], out)?;
        Ok(self.push(Op::AddColVec(x, v), t))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.rows_cols("matmul", a)?;
        let (k2, p) = self.rows_cols("matmul", b)?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0; m * p];
        gemm(m, k, p, 1.0, self.value(a).data(), false, self.value(b).data(), false, 0.0, &mut out);
        let t = Tensor::new(vec![m, p], out)?;
        Ok(self.push(Op::Matmul(a, b), t))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.rows_cols("transpose", x)?;
        let xd = self.value(x).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xd[i * c + j];
            }
        }
        let t = Tensor::new(vec![c, r], out)?;
        Ok(self.push(Op::Transpose(x), t))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let t = self.value(x).reshape(shape)?;
        Ok(self.push(Op::Reshape(x), t))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Invalid("concat: no inputs".into()));
        }
        if axis > 1 {
            return Err(Error::AxisOutOfRange { axis, rank: 2 });
        }
        let (r0, c0) = self.rows_cols("concat", parts[0])?;
        let mut rows = 0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.rows_cols("concat", p)?;
            if axis == 0 {
                if c != c0 {
                    return Err(Error::ShapeMismatch {
                        op: "concat",
                        lhs: vec![r0, c0],
                        rhs: vec![r, c],
                    });
                }
                rows += r;
                cols = c0;
            } else {
                if r != r0 {
                    return Err(Error::ShapeMismatch {
                        op: "concat",
                        lhs: vec![r0, c0],
                        rhs: vec![r, c],
                    });
                }
                rows = r0;
                cols += c;
            }
        }
        let mut out = vec![0.0; rows * cols];
        if axis == 0 {
            let mut off = 0;
            for &p in parts {
                let d = self.value(p).data();
                out[off..off + d.len()].copy_from_slice(d);
                off += d.len();
            }
        } else {
            let mut col_off = 0;
            for &p in parts {
                let (r, c) = self.rows_cols("concat", p)?;
                let d = self.value(p).data();
                for i in 0..r {
                    out[i * cols + col_off..i * cols + col_off + c]
                        .copy_from_slice(&d[i * c..(i + 1) * c]);
                }
                col_off += c;
            }
        }
        let t = Tensor::new(vec![rows, cols], out)?;
        Ok(self.push(
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            t,
        ))
    }

    pub fn slice_cols(&mut self, x: NodeId, lo: usize, hi: usize) -> Result<NodeId> {
        let (r, c) = self.rows_cols("slice_cols", x)?;
        if lo >= hi || hi > c {
            return Err(Error::Invalid(format!(
                "slice_cols: range {lo}..{hi} invalid for {c} columns"
            )));
        }
        let xd = self.value(x).data();
        let w = hi - lo;
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&xd[i * c + lo..i * c + hi]);
        }
        let t = Tensor::new(vec![r, w], out)?;
        Ok(self.push(Op::SliceCols { x, lo, hi }, t))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(gelu_scalar);
        self.push(Op::Gelu(x), v)
    }

    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let (r, c) = self.rows_cols("softmax", x)?;
        if axis > 1 {
            return Err(Error::AxisOutOfRange { axis, rank: 2 });
        }
        let xd = self.value(x).data();
        let mut out = vec![0.0; r * c];
        let (outer, inner, so, si) = if axis == 1 { (r, c, c, 1) } else { (c, r, 1, c) };
        for o in 0..outer {
            let mut mx = f64::NEG_INFINITY;
            for i in 0..inner {
                mx = mx.max(xd[o * so + i * si]);
            }
            let mut sum = 0.0;
            for i in 0..inner {
                let e = (xd[o * so + i * si] - mx).exp();
                out[o * so + i * si] = e;
                sum += e;
            }
            for i in 0..inner {
                out[o * so + i * si] /= sum;
            }
        }
        let t = Tensor::new(vec![r, c], out)?;
        Ok(self.push(Op::Softmax { x, axis }, t))
    }

    pub fn layer_norm(&mut self, x: NodeId, axis: usize, eps: f64) -> Result<NodeId> {
        let (r, c) = self.rows_cols("layernorm", x)?;
        if axis > 1 {
            return Err(Error::AxisOutOfRange { axis, rank: 2 });
        }
        let xd = self.value(x).data();
        let mut out = vec![0.0; r * c];
        let (outer, inner, so, si) = if axis == 1 { (r, c, c, 1) } else { (c, r, 1, c) };
        for o in 0..outer {
            let mut mean = 0.0;
            for i in 0..inner {
                mean += xd[o * so + i * si];
            }
            mean /= inner as f64;
            let mut var = 0.0;
            for i in 0..inner {
                let d = xd[o * so + i * si] - mean;
                var += d * d;
            }
            var /= inner as f64;
            let denom = (var + eps).sqrt();
            for i in 0..inner {
                out[o * so + i * si] = (xd[o * so + i * si] - mean) / denom;
            }
        }
        let t = Tensor::new(vec![r, c], out)?;
        Ok(self.push(Op::LayerNorm { x, axis, eps }, t))
    }

    /// Mean over `axis` of a 2-D tensor; axis 0 keeps columns.
    pub fn mean_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let (r, c) = self.rows_cols("mean", x)?;
        if axis > 1 {
            return Err(Error::AxisOutOfRange { axis, rank: 2 });
        }
        let xd = self.value(x).data();
        let t = if axis == 0 {
            let mut out = vec![0.0; c];
            for i in 0..r {
                for j in 0..c {
                    out[j] += xd[i * c + j];
                }
            }
            for v in &mut out {
                *v /= r as f64;
            }
            Tensor::new(vec![c], out)?
        } else {
            let mut out = vec![0.0; r];
            for i in 0..r {
                out[i] = xd[i * c..(i + 1) * c].iter().sum::<f64>() / c as f64;
            }
            Tensor::new(vec![r], out)?
        };
        Ok(self.push(Op::MeanAxis { x, axis }, t))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).data().iter().sum();
        self.push(Op::SumAll(x), Tensor::scalar(s))
    }

    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::sqrt);
        self.push(Op::Sqrt(x), v)
    }

    pub fn fft2(&mut self, x: NodeId) -> Result<NodeId> {
        let v = fft::fft2(self.value(x))?;
        Ok(self.push(Op::Fft2(x), v))
    }

    pub fn ifft2(&mut self, x: NodeId) -> Result<NodeId> {
        let v = fft::ifft2(self.value(x))?;
        Ok(self.push(Op::Ifft2(x), v))
    }

    pub fn complex_mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("complex_mul", a, b)?;
        let s = self.shape(a).to_vec();
        if s.last() != Some(&2) {
            return Err(Error::Invalid(format!(
                "complex_mul: trailing extent must be 2, got {s:?}"
            )));
        }
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; ad.len()];
        for i in (0..ad.len()).step_by(2) {
            out[i] = ad[i] * bd[i] - ad[i + 1] * bd[i + 1];
            out[i + 1] = ad[i] * bd[i + 1] + ad[i + 1] * bd[i];
        }
        let t = Tensor::new(s, out)?;
        Ok(self.push(Op::ComplexMul(a, b), t))
    }

    pub fn spectral_conv2d(&mut self, x: NodeId, w: NodeId, modes: usize) -> Result<NodeId> {
        spectral_check(self.value(x), self.value(w), modes)?;
        let v = spectral_forward(self.value(x), self.value(w), modes)?;
        Ok(self.push(Op::SpectralConv { x, w, modes }, v))
    }

    pub fn embed(&mut self, table: NodeId, ids: &[u32]) -> Result<NodeId> {
        let (vocab, e) = self.rows_cols("embed", table)?;
        for &id in ids {
            if id as usize >= vocab {
                return Err(Error::Invalid(format!(
                    "embed: token id {id} outside vocab {vocab}"
                )));
            }
        }
        let td = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * e);
        for &id in ids {
            out.extend_from_slice(&td[id as usize * e..(id as usize + 1) * e]);
        }
        let t = Tensor::new(vec![ids.len(), e], out)?;
        Ok(self.push(
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
            t,
        ))
    }

    /// Biased Gaussian-kernel MMD^2 between the rows of `a` and `b`.
    pub fn mmd_gaussian(&mut self, a: NodeId, b: NodeId, sigma: f64) -> Result<NodeId> {
        let (_, ea) = self.rows_cols("mmd", a)?;
        let (_, eb) = self.rows_cols("mmd", b)?;
        if ea != eb {
            return Err(Error::ShapeMismatch {
                op: "mmd",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let v = mmd_forward(self.value(a), self.value(b), sigma);
        Ok(self.push(Op::MmdGaussian { a, b, sigma }, Tensor::scalar(v)))
    }

    /// Gradients of a scalar loss for every trainable parameter on the tape.
    /// Parameters not reached by the loss get zero gradients.
    pub fn backward(&self, loss: NodeId) -> Result<GradMap> {
        if self.value(loss).numel() != 1 {
            return Err(Error::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        self.backward_seeded(&[(loss, Tensor::scalar(1.0))])
    }

    /// Reverse sweep from several seeded nodes at once; the seeds act as
    /// cotangents of an implicit scalar objective.
    pub fn backward_seeded(&self, seeds: &[(NodeId, Tensor)]) -> Result<GradMap> {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        for (id, seed) in seeds {
            if seed.shape() != self.value(*id).shape() {
                return Err(Error::ShapeMismatch {
                    op: "backward_seeded",
                    lhs: self.value(*id).shape().to_vec(),
                    rhs: seed.shape().to_vec(),
                });
            }
            accum(&mut grads[id.0], seed.clone());
        }
        for idx in (0..self.nodes.len()).rev() {
            if !self.nodes[idx].needs_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g, &mut grads);
            if self.nodes[idx].param.is_some() {
                grads[idx] = Some(g);
            }
        }
        let mut map = GradMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Some(name) = &node.param {
                let g = grads[idx]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(node.value.get().shape()));
                match map.entry(name.clone()) {
                    std::collections::btree_map::Entry::Vacant(v) => {
                        v.insert(g);
                    }
                    std::collections::btree_map::Entry::Occupied(mut o) => {
                        let merged = o.get().zip_map(&g, "accum", |x, y| x + y)?;
                        o.insert(merged);
                    }
                }
            }
        }
        Ok(map)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.needs(*a) {
                    accum(&mut grads[a.0], g.clone());
                }
                if self.needs(*b) {
                    accum(&mut grads[b.0], g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    accum(&mut grads[a.0], g.clone());
                }
                if self.needs(*b) {
                    accum(&mut grads[b.0], g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    accum(
                        &mut grads[a.0],
                        g.zip_map(self.value(*b), "mul_bwd", |x, y| x * y).expect("shape"),
                    );
                }
                if self.needs(*b) {
                    accum(
                        &mut grads[b.0],
                        g.zip_map(self.value(*a), "mul_bwd", |x, y| x * y).expect("shape"),
                    );
                }
            }
            Op::Scale(a, c) => {
                if self.needs(*a) {
                    let c = *c;
                    accum(&mut grads[a.0], g.map(|x| x * c));
                }
            }
            Op::AddScalar(a, _) => {
                if self.needs(*a) {
                    accum(&mut grads[a.0], g.clone());
                }
            }
            Op::AddRowVec(x, v) => {
                let (r, c) = (self.shape(*x)[0], self.shape(*x)[1]);
                if self.needs(*x) {
                    accum(&mut grads[x.0], g.clone());
                }
                if self.needs(*v) {
                    let gd = g.data();
                    let mut dv = vec![0.0; c];
                    for i in 0..r {
                        for j in 0..c {
                            dv[j] += gd[i * c + j];
                        }
                    }
                    accum(&mut grads[v.0], Tensor::new(vec![c], dv).expect("shape"));
                }
            }
            Op::MulRowVec(x, v) => {
                let (r, c) = (self.shape(*x)[0], self.shape(*x)[1]);
                if self.needs(*x) {
                    let vd = self.value(*v).data();
                    let gd = g.data();
                    let mut dx = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            dx[i * c + j] = gd[i * c + j] * vd[j];
                        }
                    }
                    accum(&mut grads[x.0], Tensor::new(vec![r, c], dx).expect("shape"));
                }
                if self.needs(*v) {
                    let xd = self.value(*x).data();
                    let gd = g.data();
                    let mut dv = vec![0.0; c];
                    for i in 0..r {
                        for j in 0..c {
                            dv[j] += gd[i * c + j] * xd[i * c + j];
                        }
                    }
                    accum(&mut grads[v.0], Tensor::new(vec![c], dv).expect("shape"));
                }
            }
            Op::AddColVec(x, v) => {
                let (r, c) = (self.shape(*x)[0], self.shape(*x)[1]);
                if self.needs(*x) {
                    accum(&mut grads[x.0], g.clone());
                }
                if self.needs(*v) {
                    let gd = g.data();
                    let mut dv = vec![0.0; r];
                    for i in 0..r {
                        dv[i] = gd[i * c..(i + 1) * c].iter().sum();
                    }
                    accum(&mut grads[v.0], Tensor::new(vec![r], dv).expect("shape"));
                }
            }
            Op::Matmul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let p = self.shape(*b)[1];
                if self.needs(*a) {
                    // dA = dC . B^T
                    let mut da = vec![0.0; m * k];
                    gemm(m, p, k, 1.0, g.data(), false, self.value(*b).data(), true, 0.0, &mut da);
                    accum(&mut grads[a.0], Tensor::new(vec![m, k], da).expect("shape"));
                }
                if self.needs(*b) {
                    // dB = A^T . dC
                    let mut db = vec![0.0; k * p];
                    gemm(k, m, p, 1.0, self.value(*a).data(), true, g.data(), false, 0.0, &mut db);
                    accum(&mut grads[b.0], Tensor::new(vec![k, p], db).expect("shape"));
                }
            }
            Op::Transpose(x) => {
                if self.needs(*x) {
                    let (r, c) = (self.shape(*x)[0], self.shape(*x)[1]);
                    let gd = g.data();
                    let mut dx = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            dx[i * c + j] = gd[j * r + i];
                        }
                    }
                    accum(&mut grads[x.0], Tensor::new(vec![r, c], dx).expect("shape"));
                }
            }
            Op::Reshape(x) => {
                if self.needs(*x) {
                    let dx = g.reshape(self.shape(*x)).expect("shape");
                    accum(&mut grads[x.0], dx);
                }
            }
            Op::Concat { parts, axis } => {
                let gd = g.data();
                if *axis == 0 {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.value(p).numel();
                        if self.needs(p) {
                            let dx = Tensor::new(
                                self.shape(p).to_vec(),
                                gd[off..off + len].to_vec(),
                            )
                            .expect("shape");
                            accum(&mut grads[p.0], dx);
                        }
                        off += len;
                    }
                } else {
                    let total_cols = self.shape(NodeId(idx))[1];
                    let rows = self.shape(NodeId(idx))[0];
                    let mut col_off = 0;
                    for &p in parts {
                        let c = self.shape(p)[1];
                        if self.needs(p) {
                            let mut dx = vec![0.0; rows * c];
                            for i in 0..rows {
                                dx[i * c..(i + 1) * c].copy_from_slice(
                                    &gd[i * total_cols + col_off..i * total_cols + col_off + c],
                                );
                            }
                            accum(&mut grads[p.0], Tensor::new(vec![rows, c], dx).expect("shape"));
                        }
                        col_off += c;
                    }
                }
            }
            Op::SliceCols { x, lo, hi } => {
                if self.needs(*x) {
                    let (r, c) = (self.shape(*x)[0], self.shape(*x)[1]);
                    let w = hi - lo;
                    let gd = g.data();
                    let mut dx = vec![0.0; r * c];
                    for i in 0..r {
                        dx[i * c + lo..i * c + hi].copy_from_slice(&gd[i * w..(i + 1) * w]);
                    }
                    accum(&mut grads[x.0], Tensor::new(vec![r, c], dx).expect("shape"));
                }
            }
            Op::Gelu(x) => {
                if self.needs(*x) {
                    let dx = g
                        .zip_map(self.value(*x), "gelu_bwd", |gi, xi| gi * gelu_grad(xi))
                        .expect("shape");
                    accum(&mut grads[x.0], dx);
                }
            }
            Op::Softmax { x, axis } => {
                if self.needs(*x) {
                    let y = self.value(NodeId(idx)).data();
                    let gd = g.data();
                    let (r, c) = (self.shape(*x)[0], self.shape(*x)[1]);
                    let (outer, inner, so, si) = if *axis == 1 { (r, c, c, 1) } else { (c, r, 1, c) };
                    let mut dx = vec![0.0; r * c];
                    for o in 0..outer {
                        let mut dot = 0.0;
                        for i in 0..inner {
                            dot += gd[o * so + i * si] * y[o * so + i * si];
                        }
                        for i in 0..inner {
                            let p = o * so + i * si;
                            dx[p] = y[p] * (gd[p] - dot);
                        }
                    }
                    accum(&mut grads[x.0], Tensor::new(vec![r, c], dx).expect("shape"));
                }
            }
            Op::LayerNorm { x, axis, eps } => {
                if self.needs(*x) {
                    let xd = self.value(*x).data();
                    let y = self.value(NodeId(idx)).data();
                    let gd = g.data();
                    let (r, c) = (self.shape(*x)[0], self.shape(*x)[1]);
                    let (outer, inner, so, si) = if *axis == 1 { (r, c, c, 1) } else { (c, r, 1, c) };
                    let mut dx = vec![0.0; r * c];
                    for o in 0..outer {
                        let mut mean = 0.0;
                        for i in 0..inner {
                            mean += xd[o * so + i * si];
                        }
                        mean /= inner as f64;
                        let mut var = 0.0;
                        for i in 0..inner {
                            let d = xd[o * so + i * si] - mean;
                            var += d * d;
                        }
                        var /= inner as f64;
                        let denom = (var + eps).sqrt();
                        let mut gmean = 0.0;
                        let mut gymean = 0.0;
                        for i in 0..inner {
                            let p = o * so + i * si;
                            gmean += gd[p];
                            gymean += gd[p] * y[p];
                        }
                        gmean /= inner as f64;
                        gymean /= inner as f64;
                        for i in 0..inner {
                            let p = o * so + i * si;
                            dx[p] = (gd[p] - gmean - y[p] * gymean) / denom;
                        }
                    }
                    accum(&mut grads[x.0], Tensor::new(vec![r, c], dx).expect("shape"));
                }
            }
            Op::MeanAxis { x, axis } => {
                if self.needs(*x) {
                    let (r, c) = (self.shape(*x)[0], self.shape(*x)[1]);
                    let gd = g.data();
                    let mut dx = vec![0.0; r * c];
                    if *axis == 0 {
                        let inv = 1.0 / r as f64;
                        for i in 0..r {
                            for j in 0..c {
                                dx[i * c + j] = gd[j] * inv;
                            }
                        }
                    } else {
                        let inv = 1.0 / c as f64;
                        for i in 0..r {
                            for j in 0..c {
                                dx[i * c + j] = gd[i] * inv;
                            }
                        }
                    }
                    accum(&mut grads[x.0], Tensor::new(vec![r, c], dx).expect("shape"));
                }
            }
            Op::SumAll(x) => {
                if self.needs(*x) {
                    let s = g.item();
                    accum(&mut grads[x.0], Tensor::full(self.shape(*x), s));
                }
            }
            Op::Sqrt(x) => {
                if self.needs(*x) {
                    let y = self.value(NodeId(idx)).data();
                    let gd = g.data();
                    let dx: Vec<f64> = y
                        .iter()
                        .zip(gd)
                        .map(|(&yi, &gi)| if yi == 0.0 { 0.0 } else { gi / (2.0 * yi) })
                        .collect();
                    accum(&mut grads[x.0], Tensor::new(self.shape(*x).to_vec(), dx).expect("shape"));
                }
            }
            Op::Fft2(x) => {
                if self.needs(*x) {
                    // Adjoint of the unnormalized forward transform.
                    let s = self.shape(*x);
                    let (c, n) = (s[0], s[1]);
                    let gd = g.data();
                    let mut dx = Vec::with_capacity(c * n * n);
                    let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
                    for ch in 0..c {
                        let src = &gd[ch * n * n * 2..(ch + 1) * n * n * 2];
                        for (i, b) in buf.iter_mut().enumerate() {
                            *b = Complex64::new(src[2 * i], src[2 * i + 1]);
                        }
                        ifft2_raw_local(&mut buf, n);
                        dx.extend(buf.iter().map(|v| v.re));
                    }
                    accum(&mut grads[x.0], Tensor::new(vec![c, n, n], dx).expect("shape"));
                }
            }
            Op::Ifft2(x) => {
                if self.needs(*x) {
                    // Adjoint of the 1/n^2-normalized inverse transform.
                    let s = self.shape(*x);
                    let (c, n) = (s[0], s[1]);
                    let inv = 1.0 / (n * n) as f64;
                    let gd = g.data();
                    let mut dx = Vec::with_capacity(c * n * n * 2);
                    let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
                    for ch in 0..c {
                        let src = &gd[ch * n * n..(ch + 1) * n * n];
                        for (b, &v) in buf.iter_mut().zip(src) {
                            *b = Complex64::new(v, 0.0);
                        }
                        fft2_forward_local(&mut buf, n);
                        for v in &buf {
                            dx.push(v.re * inv);
                            dx.push(v.im * inv);
                        }
                    }
                    accum(&mut grads[x.0], Tensor::new(vec![c, n, n, 2], dx).expect("shape"));
                }
            }
            Op::ComplexMul(a, b) => {
                let ga = self.needs(*a);
                let gb = self.needs(*b);
                let gd = g.data();
                if ga {
                    let bd = self.value(*b).data();
                    let mut da = vec![0.0; gd.len()];
                    for i in (0..gd.len()).step_by(2) {
                        // dA = G * conj(B)
                        da[i] = gd[i] * bd[i] + gd[i + 1] * bd[i + 1];
                        da[i + 1] = gd[i + 1] * bd[i] - gd[i] * bd[i + 1];
                    }
                    accum(&mut grads[a.0], Tensor::new(self.shape(*a).to_vec(), da).expect("shape"));
                }
                if gb {
                    let ad = self.value(*a).data();
                    let mut db = vec![0.0; gd.len()];
                    for i in (0..gd.len()).step_by(2) {
                        db[i] = gd[i] * ad[i] + gd[i + 1] * ad[i + 1];
                        db[i + 1] = gd[i + 1] * ad[i] - gd[i] * ad[i + 1];
                    }
                    accum(&mut grads[b.0], Tensor::new(self.shape(*b).to_vec(), db).expect("shape"));
                }
            }
            Op::SpectralConv { x, w, modes } => {
                let (dx, dw) = spectral_backward(
                    self.value(*x),
                    self.value(*w),
                    *modes,
                    g,
                    self.needs(*x),
                    self.needs(*w),
                );
                if let Some(dx) = dx {
                    accum(&mut grads[x.0], dx);
                }
                if let Some(dw) = dw {
                    accum(&mut grads[w.0], dw);
                }
            }
            Op::Embed { table, ids } => {
                if self.needs(*table) {
                    let (vocab, e) = (self.shape(*table)[0], self.shape(*table)[1]);
                    let gd = g.data();
                    let mut dt = vec![0.0; vocab * e];
                    for (row, &id) in ids.iter().enumerate() {
                        let dst = &mut dt[id as usize * e..(id as usize + 1) * e];
                        for (d, &v) in dst.iter_mut().zip(&gd[row * e..(row + 1) * e]) {
                            *d += v;
                        }
                    }
                    accum(&mut grads[table.0], Tensor::new(vec![vocab, e], dt).expect("shape"));
                }
            }
            Op::MmdGaussian { a, b, sigma } => {
                let (da, db) = mmd_backward(
                    self.value(*a),
                    self.value(*b),
                    *sigma,
                    g.item(),
                    self.needs(*a),
                    self.needs(*b),
                );
                if let Some(da) = da {
                    accum(&mut grads[a.0], da);
                }
                if let Some(db) = db {
                    accum(&mut grads[b.0], db);
                }
            }
        }
    }
}

fn accum(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(t) => {
            let td = t.data_mut();
            for (dst, src) in td.iter_mut().zip(g.data()) {
                *dst += src;
            }
        }
        None => *slot = Some(g),
    }
}

fn ifft2_raw_local(buf: &mut [Complex64], n: usize) {
    fft::ifft2_raw(buf, n);
}

fn fft2_forward_local(buf: &mut [Complex64], n: usize) {
    fft::fft2_raw(buf, n);
}
