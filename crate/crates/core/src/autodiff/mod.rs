//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an append-only arena of nodes. Every operation records its
//! operands by [`NodeId`] and computes its value eagerly, so node ids are
//! already in topological order and the backward pass is a single reverse
//! sweep. Graphs are cheap; training builds a fresh one per batch.

mod tensor;

pub use tensor::Tensor;

use crate::error::{Error, Result};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf {
        #[allow(dead_code)]
        trainable: bool,
    },
    Add(NodeId, NodeId),
    /// Broadcast a row vector over every row of a matrix.
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulScalar(NodeId, f64),
    MatMul(NodeId, NodeId),
    Softmax {
        input: NodeId,
        axis: usize,
    },
    LogSoftmax {
        input: NodeId,
        axis: usize,
    },
    Log(NodeId),
    Sum {
        input: NodeId,
        axis: Option<usize>,
    },
    /// Row-wise outer product flattened to a vector; the first operand varies
    /// slowest. This is the Kronecker step that merges per-feature bin
    /// activations into joint leaf activations.
    OuterFlatten(NodeId, NodeId),
    /// Ascending sort of a vector. `perm[i]` is the input index that landed at
    /// output slot `i`; the gradient flows through that fixed permutation.
    SortAscending {
        input: NodeId,
        perm: Vec<usize>,
    },
    /// Maps sorted cut points [b1..bn] to the bias vector
    /// [0, -b1, -b1-b2, ..., -b1-...-bn] of length n+1.
    CutpointBias(NodeId),
    /// Straight-through Gumbel-softmax: the forward value is one-hot per row,
    /// the backward pass differentiates the saved soft distribution.
    StGumbelSoftmax {
        input: NodeId,
        soft: Tensor,
    },
    /// Mean negative log likelihood of per-row log probabilities.
    NllMean {
        log_probs: NodeId,
        targets: Vec<usize>,
    },
}

struct Node {
    op: Op,
    value: Tensor,
    grad: Option<Tensor>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Numerically stable softmax of one contiguous slice, written into `out`.
fn softmax_slice(src: &[f64], out: &mut [f64]) {
    let max = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(src) {
        let e = (v - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Stable log-softmax of one contiguous slice: x - max - ln(sum(exp(x - max))).
fn log_softmax_slice(src: &[f64], out: &mut [f64]) {
    let max = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = src.iter().map(|&v| (v - max).exp()).sum();
    let log_sum = sum.ln();
    for (o, &v) in out.iter_mut().zip(src) {
        *o = v - max - log_sum;
    }
}

/// Iterate the slices a rank-1/rank-2 tensor decomposes into along `axis`.
/// Returns (n_slices, slice_len, stride, base_step):
/// element j of slice s lives at `s * base_step + j * stride`.
fn axis_layout(shape: &[usize], axis: usize, op: &'static str) -> Result<(usize, usize, usize, usize)> {
    match (shape.len(), axis) {
        (1, 0) => Ok((1, shape[0], 1, 0)),
        (2, 1) => Ok((shape[0], shape[1], 1, shape[1])),
        (2, 0) => Ok((shape[1], shape[0], shape[1], 1)),
        _ => Err(Error::InvalidOperation {
            op,
            message: format!("axis {} invalid for shape {:?}", axis, shape),
        }),
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            grad: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` loss with respect to node `id`.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { trainable: false }, value)
    }

    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { trainable: true }, value)
    }

    fn require_same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.require_same_shape("add", a, b)?;
        let mut out = self.value(a).clone();
        for (o, &v) in out.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *o += v;
        }
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn add_row(&mut self, matrix: NodeId, row: NodeId) -> Result<NodeId> {
        let (ms, rs) = (self.value(matrix).shape(), self.value(row).shape());
        if ms.len() != 2 || rs.len() != 1 || ms[1] != rs[0] {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: ms.to_vec(),
                rhs: rs.to_vec(),
            });
        }
        let cols = ms[1];
        let mut out = self.value(matrix).clone();
        let rowv = self.nodes[row.0].value.data().to_vec();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o += rowv[i % cols];
        }
        Ok(self.push(Op::AddRow(matrix, row), out))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.require_same_shape("mul", a, b)?;
        let mut out = self.value(a).clone();
        for (o, &v) in out.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *o *= v;
        }
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn mul_scalar(&mut self, a: NodeId, scalar: f64) -> NodeId {
        let mut out = self.value(a).clone();
        for o in out.data_mut() {
            *o *= scalar;
        }
        self.push(Op::MulScalar(a, scalar), out)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &bpj) in orow.iter_mut().zip(brow) {
                    *o += aip * bpj;
                }
            }
        }
        let out = Tensor::matrix(m, n, out)?;
        Ok(self.push(Op::MatMul(a, b), out))
    }

    pub fn softmax(&mut self, input: NodeId, axis: usize) -> Result<NodeId> {
        let shape = self.value(input).shape().to_vec();
        let (slices, len, stride, step) = axis_layout(&shape, axis, "softmax")?;
        let src = self.value(input).data().to_vec();
        let mut out = vec![0.0; src.len()];
        let mut buf_in = vec![0.0; len];
        let mut buf_out = vec![0.0; len];
        for s in 0..slices {
            for j in 0..len {
                buf_in[j] = src[s * step + j * stride];
            }
            softmax_slice(&buf_in, &mut buf_out);
            for j in 0..len {
                out[s * step + j * stride] = buf_out[j];
            }
        }
        let out = Tensor::new(shape, out)?;
        Ok(self.push(Op::Softmax { input, axis }, out))
    }

    pub fn log_softmax(&mut self, input: NodeId, axis: usize) -> Result<NodeId> {
        let shape = self.value(input).shape().to_vec();
        let (slices, len, stride, step) = axis_layout(&shape, axis, "log_softmax")?;
        let src = self.value(input).data().to_vec();
        let mut out = vec![0.0; src.len()];
        let mut buf_in = vec![0.0; len];
        let mut buf_out = vec![0.0; len];
        for s in 0..slices {
            for j in 0..len {
                buf_in[j] = src[s * step + j * stride];
            }
            log_softmax_slice(&buf_in, &mut buf_out);
            for j in 0..len {
                out[s * step + j * stride] = buf_out[j];
            }
        }
        let out = Tensor::new(shape, out)?;
        Ok(self.push(Op::LogSoftmax { input, axis }, out))
    }

    pub fn log(&mut self, input: NodeId) -> NodeId {
        let mut out = self.value(input).clone();
        for o in out.data_mut() {
            *o = o.ln();
        }
        self.push(Op::Log(input), out)
    }

    pub fn sum(&mut self, input: NodeId, axis: Option<usize>) -> Result<NodeId> {
        let shape = self.value(input).shape().to_vec();
        let src = self.value(input).data();
        let out = match axis {
            None => Tensor::scalar(src.iter().sum()),
            Some(ax) => {
                let (slices, len, stride, step) = axis_layout(&shape, ax, "sum")?;
                // Summing along `ax` leaves one value per orthogonal slice.
                let mut out = vec![0.0; slices];
                for (s, o) in out.iter_mut().enumerate() {
                    for j in 0..len {
                        *o += src[s * step + j * stride];
                    }
                }
                if shape.len() == 1 {
                    Tensor::scalar(out[0])
                } else {
                    Tensor::vector(out)
                }
            }
        };
        Ok(self.push(Op::Sum { input, axis }, out))
    }

    pub fn outer_flatten(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        let out = match (sa.as_slice(), sb.as_slice()) {
            (&[n], &[m]) => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                let mut out = vec![0.0; n * m];
                for j in 0..n {
                    for k in 0..m {
                        out[j * m + k] = av[j] * bv[k];
                    }
                }
                Tensor::vector(out)
            }
            (&[ba, n], &[bb, m]) if ba == bb => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                let mut out = vec![0.0; ba * n * m];
                for i in 0..ba {
                    for j in 0..n {
                        let aij = av[i * n + j];
                        for k in 0..m {
                            out[i * n * m + j * m + k] = aij * bv[i * m + k];
                        }
                    }
                }
                Tensor::matrix(ba, n * m, out)?
            }
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "outer_flatten",
                    lhs: sa,
                    rhs: sb,
                })
            }
        };
        Ok(self.push(Op::OuterFlatten(a, b), out))
    }

    /// Sorts a vector ascending. Exact duplicates in the result are nudged
    /// apart by 1e-12 so downstream bin boundaries stay distinct; the nudge is
    /// an additive constant and does not alter the gradient.
    pub fn sort_ascending(&mut self, input: NodeId) -> Result<NodeId> {
        if self.value(input).rank() != 1 {
            return Err(Error::InvalidOperation {
                op: "sort_ascending",
                message: format!("expected rank 1, got shape {:?}", self.value(input).shape()),
            });
        }
        let src = self.value(input).data();
        let mut perm: Vec<usize> = (0..src.len()).collect();
        perm.sort_by(|&i, &j| src[i].total_cmp(&src[j]));
        let mut out: Vec<f64> = perm.iter().map(|&i| src[i]).collect();
        for i in 1..out.len() {
            if out[i] <= out[i - 1] {
                out[i] = out[i - 1] + 1e-12;
            }
        }
        Ok(self.push(
            Op::SortAscending {
                input,
                perm,
            },
            Tensor::vector(out),
        ))
    }

    /// Bias vector for cut points sorted ascending: with input [b1..bn] the
    /// output is [0, -b1, -b1-b2, ..., -(b1+...+bn)], length n+1.
    pub fn cutpoint_bias(&mut self, sorted: NodeId) -> Result<NodeId> {
        let t = self.value(sorted);
        if t.rank() != 1 || t.is_empty() {
            return Err(Error::InvalidOperation {
                op: "cutpoint_bias",
                message: format!("expected non-empty rank-1 input, got shape {:?}", t.shape()),
            });
        }
        let src = t.data();
        let mut out = vec![0.0; src.len() + 1];
        let mut acc = 0.0;
        for (i, &b) in src.iter().enumerate() {
            acc -= b;
            out[i + 1] = acc;
        }
        Ok(self.push(Op::CutpointBias(sorted), Tensor::vector(out)))
    }

    /// Straight-through Gumbel-softmax over rows (or over a single vector).
    /// `input` must already include any temperature scaling. The forward value
    /// is one-hot at the perturbed argmax; ties resolve to the highest index,
    /// matching the hard binning rule that boundary values take the upper bin.
    pub fn st_gumbel_softmax<R: Rng + ?Sized>(
        &mut self,
        input: NodeId,
        rng: &mut R,
    ) -> Result<NodeId> {
        let shape = self.value(input).shape().to_vec();
        let (slices, len) = match *shape.as_slice() {
            [n] => (1, n),
            [r, c] => (r, c),
            _ => {
                return Err(Error::InvalidOperation {
                    op: "st_gumbel_softmax",
                    message: format!("expected rank 1 or 2, got shape {:?}", shape),
                })
            }
        };
        let src = self.value(input).data().to_vec();
        let mut soft = vec![0.0; src.len()];
        let mut hard = vec![0.0; src.len()];
        let mut perturbed = vec![0.0; len];
        for s in 0..slices {
            let row = &src[s * len..(s + 1) * len];
            for (p, &v) in perturbed.iter_mut().zip(row) {
                let u: f64 = rng.gen::<f64>().clamp(1e-12, 1.0 - 1e-12);
                *p = v + (-(-u.ln()).ln());
            }
            softmax_slice(&perturbed, &mut soft[s * len..(s + 1) * len]);
            let mut best = 0;
            for (j, &p) in perturbed.iter().enumerate() {
                if p >= perturbed[best] {
                    best = j;
                }
            }
            hard[s * len + best] = 1.0;
        }
        let soft = Tensor::new(shape.clone(), soft)?;
        let hard = Tensor::new(shape, hard)?;
        Ok(self.push(Op::StGumbelSoftmax { input, soft }, hard))
    }

    /// Mean negative log likelihood: `log_probs` is [batch, classes] of
    /// log probabilities (typically from `log_softmax`), `targets` one class
    /// index per row.
    pub fn nll_mean(&mut self, log_probs: NodeId, targets: &[usize]) -> Result<NodeId> {
        let shape = self.value(log_probs).shape().to_vec();
        if shape.len() != 2 || shape[0] != targets.len() {
            return Err(Error::InvalidOperation {
                op: "nll_mean",
                message: format!(
                    "log_probs shape {:?} incompatible with {} targets",
                    shape,
                    targets.len()
                ),
            });
        }
        let classes = shape[1];
        for &t in targets {
            if t >= classes {
                return Err(Error::LabelOutOfRange {
                    label: t,
                    n_classes: classes,
                });
            }
        }
        let lp = self.value(log_probs).data();
        let batch = shape[0];
        let total: f64 = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| lp[i * classes + t])
            .sum();
        let loss = -total / batch as f64;
        Ok(self.push(
            Op::NllMean {
                log_probs,
                targets: targets.to_vec(),
            },
            Tensor::scalar(loss),
        ))
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate across all
    /// consumers of a node and are readable through [`Graph::grad`].
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::InvalidOperation {
                op: "backward",
                message: format!(
                    "loss must be scalar, got shape {:?}",
                    self.value(loss).shape()
                ),
            });
        }
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape()))
            .collect();
        grads[loss.0].data_mut()[0] = 1.0;

        // Node ids are topologically ordered by construction, so a reverse id
        // sweep visits every consumer before its operands.
        for id in (0..=loss.0).rev() {
            let g = grads[id].clone();
            if g.data().iter().all(|&v| v == 0.0) {
                continue;
            }
            match &self.nodes[id].op {
                Op::Leaf { .. } => {}
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads[a.0], g.data());
                    accumulate(&mut grads[b.0], g.data());
                }
                Op::AddRow(m, r) => {
                    let (m, r) = (*m, *r);
                    let cols = self.nodes[id].value.shape()[1];
                    accumulate(&mut grads[m.0], g.data());
                    let gr = grads[r.0].data_mut();
                    for (i, &gv) in g.data().iter().enumerate() {
                        gr[i % cols] += gv;
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let bv = self.nodes[b.0].value.data().to_vec();
                    let av = self.nodes[a.0].value.data().to_vec();
                    for ((ga, &gv), &bvv) in
                        grads[a.0].data_mut().iter_mut().zip(g.data()).zip(&bv)
                    {
                        *ga += gv * bvv;
                    }
                    for ((gb, &gv), &avv) in
                        grads[b.0].data_mut().iter_mut().zip(g.data()).zip(&av)
                    {
                        *gb += gv * avv;
                    }
                }
                Op::MulScalar(a, s) => {
                    let (a, s) = (*a, *s);
                    for (ga, &gv) in grads[a.0].data_mut().iter_mut().zip(g.data()) {
                        *ga += gv * s;
                    }
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let sa = self.nodes[a.0].value.shape().to_vec();
                    let sb = self.nodes[b.0].value.shape().to_vec();
                    let (m, k, n) = (sa[0], sa[1], sb[1]);
                    let av = self.nodes[a.0].value.data().to_vec();
                    let bv = self.nodes[b.0].value.data().to_vec();
                    {
                        let ga = grads[a.0].data_mut();
                        for i in 0..m {
                            for p in 0..k {
                                let mut acc = 0.0;
                                for j in 0..n {
                                    acc += g.data()[i * n + j] * bv[p * n + j];
                                }
                                ga[i * k + p] += acc;
                            }
                        }
                    }
                    {
                        let gb = grads[b.0].data_mut();
                        for p in 0..k {
                            for j in 0..n {
                                let mut acc = 0.0;
                                for i in 0..m {
                                    acc += av[i * k + p] * g.data()[i * n + j];
                                }
                                gb[p * n + j] += acc;
                            }
                        }
                    }
                }
                Op::Softmax { input, axis } => {
                    let (input, axis) = (*input, *axis);
                    let shape = self.nodes[id].value.shape().to_vec();
                    let y = self.nodes[id].value.data().to_vec();
                    let (slices, len, stride, step) =
                        axis_layout(&shape, axis, "softmax").expect("validated at forward");
                    let gx = grads[input.0].data_mut();
                    for s in 0..slices {
                        let mut dot = 0.0;
                        for j in 0..len {
                            let idx = s * step + j * stride;
                            dot += g.data()[idx] * y[idx];
                        }
                        for j in 0..len {
                            let idx = s * step + j * stride;
                            gx[idx] += y[idx] * (g.data()[idx] - dot);
                        }
                    }
                }
                Op::LogSoftmax { input, axis } => {
                    let (input, axis) = (*input, *axis);
                    let shape = self.nodes[id].value.shape().to_vec();
                    let lp = self.nodes[id].value.data().to_vec();
                    let (slices, len, stride, step) =
                        axis_layout(&shape, axis, "log_softmax").expect("validated at forward");
                    let gx = grads[input.0].data_mut();
                    for s in 0..slices {
                        let mut gsum = 0.0;
                        for j in 0..len {
                            gsum += g.data()[s * step + j * stride];
                        }
                        for j in 0..len {
                            let idx = s * step + j * stride;
                            gx[idx] += g.data()[idx] - lp[idx].exp() * gsum;
                        }
                    }
                }
                Op::Log(a) => {
                    let a = *a;
                    let av = self.nodes[a.0].value.data().to_vec();
                    for ((ga, &gv), &x) in
                        grads[a.0].data_mut().iter_mut().zip(g.data()).zip(&av)
                    {
                        *ga += gv / x;
                    }
                }
                Op::Sum { input, axis } => {
                    let (input, axis) = (*input, *axis);
                    let in_shape = self.nodes[input.0].value.shape().to_vec();
                    let gx = grads[input.0].data_mut();
                    match axis {
                        None => {
                            let gv = g.data()[0];
                            for ga in gx.iter_mut() {
                                *ga += gv;
                            }
                        }
                        Some(ax) => {
                            let (slices, len, stride, step) =
                                axis_layout(&in_shape, ax, "sum").expect("validated at forward");
                            for s in 0..slices {
                                let gv = g.data()[s];
                                for j in 0..len {
                                    gx[s * step + j * stride] += gv;
                                }
                            }
                        }
                    }
                }
                Op::OuterFlatten(a, b) => {
                    let (a, b) = (*a, *b);
                    let sa = self.nodes[a.0].value.shape().to_vec();
                    let av = self.nodes[a.0].value.data().to_vec();
                    let bv = self.nodes[b.0].value.data().to_vec();
                    let (batch, n, m) = if sa.len() == 1 {
                        (1, sa[0], bv.len())
                    } else {
                        (sa[0], sa[1], self.nodes[b.0].value.shape()[1])
                    };
                    {
                        let ga = grads[a.0].data_mut();
                        for i in 0..batch {
                            for j in 0..n {
                                let mut acc = 0.0;
                                for k in 0..m {
                                    acc += g.data()[i * n * m + j * m + k] * bv[i * m + k];
                                }
                                ga[i * n + j] += acc;
                            }
                        }
                    }
                    {
                        let gb = grads[b.0].data_mut();
                        for i in 0..batch {
                            for k in 0..m {
                                let mut acc = 0.0;
                                for j in 0..n {
                                    acc += g.data()[i * n * m + j * m + k] * av[i * n + j];
                                }
                                gb[i * m + k] += acc;
                            }
                        }
                    }
                }
                Op::SortAscending { input, perm } => {
                    let input = *input;
                    let perm = perm.clone();
                    let gx = grads[input.0].data_mut();
                    for (i, &src) in perm.iter().enumerate() {
                        gx[src] += g.data()[i];
                    }
                }
                Op::CutpointBias(a) => {
                    let a = *a;
                    // out[i] depends on in[j] for all j < i, each with slope -1,
                    // so grad(in[j]) is minus the suffix sum of g over i > j.
                    let gx = grads[a.0].data_mut();
                    let n = gx.len();
                    let mut suffix = 0.0;
                    for i in (1..=n).rev() {
                        suffix += g.data()[i];
                        gx[i - 1] -= suffix;
                    }
                }
                Op::StGumbelSoftmax { input, soft } => {
                    let input = *input;
                    let y = soft.data().to_vec();
                    let shape = self.nodes[id].value.shape().to_vec();
                    let (slices, len) = match *shape.as_slice() {
                        [n] => (1, n),
                        [r, c] => (r, c),
                        _ => unreachable!("validated at forward"),
                    };
                    let gx = grads[input.0].data_mut();
                    for s in 0..slices {
                        let mut dot = 0.0;
                        for j in 0..len {
                            dot += g.data()[s * len + j] * y[s * len + j];
                        }
                        for j in 0..len {
                            let idx = s * len + j;
                            gx[idx] += y[idx] * (g.data()[idx] - dot);
                        }
                    }
                }
                Op::NllMean { log_probs, targets } => {
                    let log_probs = *log_probs;
                    let targets = targets.clone();
                    let classes = self.nodes[log_probs.0].value.shape()[1];
                    let batch = targets.len() as f64;
                    let gv = g.data()[0];
                    let gx = grads[log_probs.0].data_mut();
                    for (i, &t) in targets.iter().enumerate() {
                        gx[i * classes + t] -= gv / batch;
                    }
                }
            }
        }

        for (node, grad) in self.nodes.iter_mut().zip(grads) {
            node.grad = Some(grad);
        }
        Ok(())
    }
}

fn accumulate(dst: &mut Tensor, src: &[f64]) {
    for (d, &s) in dst.data_mut().iter_mut().zip(src) {
        *d += s;
    }
}
