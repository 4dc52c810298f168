use std::borrow::Cow;

use rand::RngExt;

use crate::error::{invalid, Result, TensorError};
use crate::linalg::gemm;
use crate::rng::SeededRng;
use crate::Tensor;

/// Handle to a value recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Matmul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat(Vec<Var>),
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
    SumAxis {
        input: Var,
        axis: usize,
    },
    SumAll(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Powf(Var, f64),
    Softmax(Var),
    WeightedSoftmax(Var, Var),
    CausalConv1d {
        input: Var,
        weight: Var,
    },
    Glu(Var),
    Dropout {
        input: Var,
        mask: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        label: usize,
    },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Record of the operations of one forward pass.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward is a single reverse sweep.
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    check_finite: bool,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

/// Leaf gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. a leaf, or `None` when the leaf is
    /// unreachable from the loss or does not require gradients.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    pub fn tensor(&self, var: Var) -> Option<Tensor> {
        self.get(var)
            .map(|g| Tensor::new(self.shapes[var.0].clone(), g.to_vec()).expect("grad shape"))
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let nd = a.len().max(b.len());
    let mut out = vec![0; nd];
    for i in 0..nd {
        let da = if i + a.len() >= nd {
            a[i + a.len() - nd]
        } else {
            1
        };
        let db = if i + b.len() >= nd {
            b[i + b.len() - nd]
        } else {
            1
        };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `src` addressed through the broadcast `out` shape.
fn broadcast_strides(src: &[usize], out: &[usize]) -> Vec<usize> {
    let nd = out.len();
    let mut strides = vec![0; nd];
    let mut acc = 1;
    for i in (0..src.len()).rev() {
        let o = i + nd - src.len();
        strides[o] = if src[i] == 1 { 0 } else { acc };
        acc *= src[i];
    }
    strides
}

/// Calls `f(out, ia, ib)` for every flat output index with the matching flat
/// indices into both operands.
fn for_each_broadcast(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let numel: usize = out.iter().product();
    let nd = out.len();
    let mut idx = vec![0usize; nd];
    let (mut ia, mut ib) = (0usize, 0usize);
    for o in 0..numel {
        f(o, ia, ib);
        let mut d = nd;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(outer, dim, inner)` decomposition of `shape` around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

#[derive(Clone, Copy)]
enum BinKind {
    Add,
    Sub,
    Mul,
    Div,
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            check_finite: true,
        }
    }

    /// Disables the per-operation NaN/Inf scan.
    pub fn without_finite_check(mut self) -> Self {
        self.check_finite = false;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Total number of scalars held by the graph's values.
    pub fn footprint(&self) -> usize {
        self.nodes.iter().map(|n| n.value.numel()).sum()
    }

    fn leaf(&mut self, value: Cow<'a, Tensor>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(Cow::Owned(value), false)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor) -> Var {
        self.leaf(Cow::Borrowed(value), false)
    }

    /// Owned leaf that receives a gradient.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.leaf(Cow::Owned(value), true)
    }

    /// Borrowed leaf that receives a gradient.
    pub fn param(&mut self, value: &'a Tensor) -> Var {
        self.leaf(Cow::Borrowed(value), true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if self.check_finite {
            if let Some(index) = value.data().iter().position(|x| !x.is_finite()) {
                return Err(TensorError::NonFiniteDetected { op: name, index });
            }
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn binary(&mut self, kind: BinKind, a: Var, b: Var) -> Result<Var> {
        let name = match kind {
            BinKind::Add => "add",
            BinKind::Sub => "sub",
            BinKind::Mul => "mul",
            BinKind::Div => "div",
        };
        let (ta, tb) = (self.value(a), self.value(b));
        let f = |x: f64, y: f64| match kind {
            BinKind::Add => x + y,
            BinKind::Sub => x - y,
            BinKind::Mul => x * y,
            BinKind::Div => x / y,
        };
        let value = if ta.shape() == tb.shape() {
            let data = ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Tensor::new(ta.shape().to_vec(), data)?
        } else {
            let out = broadcast_shape(ta.shape(), tb.shape())
                .ok_or_else(|| shape_err(name, ta.shape(), tb.shape()))?;
            let sa = broadcast_strides(ta.shape(), &out);
            let sb = broadcast_strides(tb.shape(), &out);
            let mut data = vec![0.0; out.iter().product()];
            let (da, db) = (ta.data(), tb.data());
            for_each_broadcast(&out, &sa, &sb, |o, ia, ib| data[o] = f(da[ia], db[ib]));
            Tensor::new(out, data)?
        };
        let op = match kind {
            BinKind::Add => Op::Add(a, b),
            BinKind::Sub => Op::Sub(a, b),
            BinKind::Mul => Op::Mul(a, b),
            BinKind::Div => Op::Div(a, b),
        };
        self.push(name, value, op, &[a, b])
    }

    /// Elementwise sum with broadcasting over leading or singleton dims.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Div, a, b)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push("matmul", value, Op::Matmul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose()?;
        self.push("transpose", value, Op::Transpose(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        self.push("reshape", value, Op::Reshape(a), &[a])
    }

    /// Concatenates along the last axis; leading dims must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| invalid("concat", "no inputs"))?;
        let lead = self.shape(*first)[..self.shape(*first).len() - 1].to_vec();
        let rows: usize = lead.iter().product();
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let s = self.shape(*p);
            if s.len() != lead.len() + 1 || s[..lead.len()] != lead[..] {
                return Err(shape_err("concat", self.shape(*first), s));
            }
            widths.push(s[s.len() - 1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let src = self.value(*p).data();
            for r in 0..rows {
                data[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, data)?;
        self.push("concat", value, Op::Concat(parts.to_vec()), parts)
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(invalid(
                "slice",
                format!("axis {axis} range {start}..{} of {shape:?}", start + len),
            ));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let value = Tensor::new(out_shape, data)?;
        self.push(
            "slice",
            value,
            Op::Slice {
                input: a,
                axis,
                start,
            },
            &[a],
        )
    }

    /// Sums over `axis`, removing it (a 1-D input yields shape `[1]`).
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(invalid("sum_axis", format!("axis {axis} of {shape:?}")));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for d in 0..dim {
                let row = &src[(o * dim + d) * inner..(o * dim + d + 1) * inner];
                for (acc, &x) in data[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *acc += x;
                }
            }
        }
        let mut out_shape: Vec<usize> = shape.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let value = Tensor::new(out_shape, data)?;
        self.push("sum_axis", value, Op::SumAxis { input: a, axis }, &[a])
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let n = self
            .shape(a)
            .get(axis)
            .copied()
            .ok_or_else(|| invalid("mean_axis", format!("axis {axis}")))?;
        let s = self.sum_axis(a, axis)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(total), Op::SumAll(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel();
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|x| c * x);
        self.push("scale", value, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x + c);
        self.push("add_scalar", value, Op::AddScalar(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push("relu", value, Op::Relu(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push("leaky_relu", value, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(sigmoid);
        self.push("sigmoid", value, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::tanh);
        self.push("tanh", value, Op::Tanh(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::exp);
        self.push("exp", value, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::ln);
        self.push("log", value, Op::Log(a), &[a])
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::abs);
        self.push("abs", value, Op::Abs(a), &[a])
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x.powf(p));
        self.push("powf", value, Op::Powf(a, p), &[a])
    }

    /// Max-stabilised softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let c = t.cols();
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        let value = Tensor::new(t.shape().to_vec(), data)?;
        self.push("softmax", value, Op::Softmax(a), &[a])
    }

    /// Row-wise `w_ij·exp(x_ij) / Σ_k w_ik·exp(x_ik)` over the last axis.
    ///
    /// Weights must be non-negative with a positive sum in every row.
    pub fn weighted_softmax(&mut self, logits: Var, weights: Var) -> Result<Var> {
        let (x, w) = (self.value(logits), self.value(weights));
        if x.shape() != w.shape() {
            return Err(shape_err("weighted_softmax", x.shape(), w.shape()));
        }
        let c = x.cols();
        let mut data = vec![0.0; x.numel()];
        for (r, ((xr, wr), out)) in x
            .data()
            .chunks(c)
            .zip(w.data().chunks(c))
            .zip(data.chunks_mut(c))
            .enumerate()
        {
            if wr.iter().any(|&v| v < 0.0) {
                return Err(invalid(
                    "weighted_softmax",
                    format!("negative weight in row {r}"),
                ));
            }
            let m = xr
                .iter()
                .zip(wr)
                .filter(|(_, &wv)| wv > 0.0)
                .map(|(&xv, _)| xv)
                .fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                return Err(invalid(
                    "weighted_softmax",
                    format!("row {r} has zero total weight"),
                ));
            }
            let mut s = 0.0;
            for ((o, &xv), &wv) in out.iter_mut().zip(xr).zip(wr) {
                if wv > 0.0 {
                    *o = wv * (xv - m).exp();
                    s += *o;
                }
            }
            for o in out.iter_mut() {
                *o /= s;
            }
        }
        let value = Tensor::new(x.shape().to_vec(), data)?;
        self.push(
            "weighted_softmax",
            value,
            Op::WeightedSoftmax(logits, weights),
            &[logits, weights],
        )
    }

    /// Valid (unpadded) causal convolution along time.
    ///
    /// `input` is `[B, T, C_in]`, `weight` is `[K, C_in, C_out]`; the result is
    /// `[B, T - K + 1, C_out]` where output step `t` sees inputs `t..t+K`.
    pub fn causal_conv1d(&mut self, input: Var, weight: Var) -> Result<Var> {
        let (x, w) = (self.value(input), self.value(weight));
        if x.ndim() != 3 || w.ndim() != 3 || x.shape()[2] != w.shape()[1] {
            return Err(shape_err("causal_conv1d", x.shape(), w.shape()));
        }
        let (b, t, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (k, cout) = (w.shape()[0], w.shape()[2]);
        if t < k {
            return Err(invalid(
                "causal_conv1d",
                format!("series length {t} < kernel {k}"),
            ));
        }
        let tout = t - k + 1;
        let cols = im2col(x.data(), b, t, cin, k);
        let mut data = vec![0.0; b * tout * cout];
        gemm(
            b * tout,
            k * cin,
            cout,
            &cols,
            (k * cin, 1),
            w.data(),
            (cout, 1),
            &mut data,
            false,
        );
        let value = Tensor::new(vec![b, tout, cout], data)?;
        self.push(
            "causal_conv1d",
            value,
            Op::CausalConv1d { input, weight },
            &[input, weight],
        )
    }

    /// Gated linear unit: splits the last axis into halves `(a, b)` and
    /// returns `a ⊙ σ(b)`.
    pub fn glu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let c2 = t.cols();
        if !c2.is_multiple_of(2) {
            return Err(invalid("glu", format!("odd channel count {c2}")));
        }
        let c = c2 / 2;
        let mut data = Vec::with_capacity(t.numel() / 2);
        for row in t.data().chunks(c2) {
            for j in 0..c {
                data.push(row[j] * sigmoid(row[c + j]));
            }
        }
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = c;
        let value = Tensor::new(shape, data)?;
        self.push("glu", value, Op::Glu(a), &[a])
    }

    /// Inverted dropout. Identity when `training` is false or `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64, training: bool, rng: &mut SeededRng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(invalid("dropout", format!("rate {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(a).numel())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let t = self.value(a);
        let data = t.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        self.push("dropout", value, Op::Dropout { input: a, mask }, &[a])
    }

    /// `-log softmax(logits)[label]` with log-sum-exp stabilisation.
    pub fn cross_entropy_with_logits(&mut self, logits: Var, label: usize) -> Result<Var> {
        let x = self.value(logits).data();
        if label >= x.len() {
            return Err(invalid(
                "cross_entropy_with_logits",
                format!("label {label} out of {} classes", x.len()),
            ));
        }
        let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let value = Tensor::scalar(lse - x[label]);
        self.push(
            "cross_entropy_with_logits",
            value,
            Op::CrossEntropy { logits, label },
            &[logits],
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(TensorError::NotScalar(lt.shape().to_vec()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(i, &g, &mut grads);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                grads[i] = None;
            }
        }
        let shapes = self
            .nodes
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        Ok(Gradients { grads, shapes })
    }

    fn accum<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let numel = self.nodes[v.0].value.numel();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; numel]))
    }

    fn backprop_binary(
        &self,
        kind: BinKind,
        out_shape: &[usize],
        a: Var,
        b: Var,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (ta, tb) = (self.value(a), self.value(b));
        let (da, db) = (ta.data(), tb.data());
        let sa = broadcast_strides(ta.shape(), out_shape);
        let sb = broadcast_strides(tb.shape(), out_shape);
        if let Some(ga) = self.accum(grads, a) {
            for_each_broadcast(out_shape, &sa, &sb, |o, ia, ib| {
                ga[ia] += match kind {
                    BinKind::Add | BinKind::Sub => g[o],
                    BinKind::Mul => g[o] * db[ib],
                    BinKind::Div => g[o] / db[ib],
                }
            });
        }
        if let Some(gb) = self.accum(grads, b) {
            for_each_broadcast(out_shape, &sa, &sb, |o, ia, ib| {
                gb[ib] += match kind {
                    BinKind::Add => g[o],
                    BinKind::Sub => -g[o],
                    BinKind::Mul => g[o] * da[ia],
                    BinKind::Div => -g[o] * da[ia] / (db[ib] * db[ib]),
                }
            });
        }
    }

    fn backprop_unary(
        &self,
        a: Var,
        out: &[f64],
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        d: impl Fn(f64, f64) -> f64,
    ) {
        let x = self.value(a).data();
        if let Some(ga) = self.accum(grads, a) {
            for i in 0..g.len() {
                ga[i] += g[i] * d(x[i], out[i]);
            }
        }
    }

    fn backprop(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &self.nodes[i].value;
        let y = out.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => self.backprop_binary(BinKind::Add, out.shape(), *a, *b, g, grads),
            Op::Sub(a, b) => self.backprop_binary(BinKind::Sub, out.shape(), *a, *b, g, grads),
            Op::Mul(a, b) => self.backprop_binary(BinKind::Mul, out.shape(), *a, *b, g, grads),
            Op::Div(a, b) => self.backprop_binary(BinKind::Div, out.shape(), *a, *b, g, grads),
            Op::Matmul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if let Some(ga) = self.accum(grads, *a) {
                    // dA = G · Bᵀ
                    gemm(m, n, k, g, (n, 1), tb.data(), (1, n), ga, true);
                }
                if let Some(gb) = self.accum(grads, *b) {
                    // dB = Aᵀ · G
                    gemm(k, m, n, ta.data(), (1, k), g, (n, 1), gb, true);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (out.rows(), out.cols());
                if let Some(ga) = self.accum(grads, *a) {
                    for p in 0..r {
                        for q in 0..c {
                            ga[q * r + p] += g[p * c + q];
                        }
                    }
                }
            }
            Op::Reshape(a) | Op::AddScalar(a) => {
                if let Some(ga) = self.accum(grads, *a) {
                    for (x, &d) in ga.iter_mut().zip(g) {
                        *x += d;
                    }
                }
            }
            Op::Concat(parts) => {
                let total = out.cols();
                let rows = out.numel() / total;
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    if let Some(gp) = self.accum(grads, *p) {
                        for r in 0..rows {
                            for j in 0..w {
                                gp[r * w + j] += g[r * total + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Slice { input, axis, start } => {
                let in_shape = self.value(*input).shape().to_vec();
                let (outer, dim, inner) = split_axis(&in_shape, *axis);
                let len = out.shape()[*axis];
                if let Some(ga) = self.accum(grads, *input) {
                    for o in 0..outer {
                        let base = (o * dim + start) * inner;
                        let src = &g[o * len * inner..(o + 1) * len * inner];
                        for (x, &d) in ga[base..base + len * inner].iter_mut().zip(src) {
                            *x += d;
                        }
                    }
                }
            }
            Op::SumAxis { input, axis } => {
                let in_shape = self.value(*input).shape().to_vec();
                let (outer, dim, inner) = split_axis(&in_shape, *axis);
                if let Some(ga) = self.accum(grads, *input) {
                    for o in 0..outer {
                        for d in 0..dim {
                            let base = (o * dim + d) * inner;
                            for j in 0..inner {
                                ga[base + j] += g[o * inner + j];
                            }
                        }
                    }
                }
            }
            Op::SumAll(a) => {
                if let Some(ga) = self.accum(grads, *a) {
                    for x in ga.iter_mut() {
                        *x += g[0];
                    }
                }
            }
            Op::Scale(a, c) => self.backprop_unary(*a, y, g, grads, |_, _| *c),
            Op::Relu(a) => {
                self.backprop_unary(*a, y, g, grads, |x, _| if x > 0.0 { 1.0 } else { 0.0 })
            }
            Op::LeakyRelu(a, s) => {
                self.backprop_unary(*a, y, g, grads, |x, _| if x > 0.0 { 1.0 } else { *s })
            }
            Op::Sigmoid(a) => self.backprop_unary(*a, y, g, grads, |_, s| s * (1.0 - s)),
            Op::Tanh(a) => self.backprop_unary(*a, y, g, grads, |_, t| 1.0 - t * t),
            Op::Exp(a) => self.backprop_unary(*a, y, g, grads, |_, e| e),
            Op::Log(a) => self.backprop_unary(*a, y, g, grads, |x, _| 1.0 / x),
            Op::Abs(a) => self.backprop_unary(*a, y, g, grads, |x, _| {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }),
            Op::Powf(a, p) => self.backprop_unary(*a, y, g, grads, |x, _| p * x.powf(p - 1.0)),
            Op::Softmax(a) => {
                let c = out.cols();
                if let Some(ga) = self.accum(grads, *a) {
                    for ((yr, gr), gar) in y.chunks(c).zip(g.chunks(c)).zip(ga.chunks_mut(c)) {
                        let s: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            gar[j] += yr[j] * (gr[j] - s);
                        }
                    }
                }
            }
            Op::WeightedSoftmax(logits, weights) => {
                let c = out.cols();
                let x = self.value(*logits).data();
                let w = self.value(*weights).data();
                let dots: Vec<f64> = y
                    .chunks(c)
                    .zip(g.chunks(c))
                    .map(|(yr, gr)| yr.iter().zip(gr).map(|(a, b)| a * b).sum())
                    .collect();
                if let Some(gx) = self.accum(grads, *logits) {
                    for (r, s) in dots.iter().enumerate() {
                        for j in r * c..(r + 1) * c {
                            gx[j] += y[j] * (g[j] - s);
                        }
                    }
                }
                if let Some(gw) = self.accum(grads, *weights) {
                    for (r, s) in dots.iter().enumerate() {
                        let row = r * c..(r + 1) * c;
                        let m = row
                            .clone()
                            .filter(|&j| w[j] > 0.0)
                            .map(|j| x[j])
                            .fold(f64::NEG_INFINITY, f64::max);
                        let total: f64 = row
                            .clone()
                            .filter(|&j| w[j] > 0.0)
                            .map(|j| w[j] * (x[j] - m).exp())
                            .sum();
                        for j in row {
                            let e = (x[j] - m).min(700.0).exp();
                            gw[j] += e / total * (g[j] - s);
                        }
                    }
                }
            }
            Op::CausalConv1d { input, weight } => {
                let (x, w) = (self.value(*input), self.value(*weight));
                let (b, t, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (k, cout) = (w.shape()[0], w.shape()[2]);
                let tout = t - k + 1;
                let kc = k * cin;
                let rows = b * tout;
                if let Some(gw) = self.accum(grads, *weight) {
                    // dW += windowsᵀ · G
                    let cols = im2col(x.data(), b, t, cin, k);
                    gemm(kc, rows, cout, &cols, (1, kc), g, (cout, 1), gw, true);
                }
                if let Some(gx) = self.accum(grads, *input) {
                    // dWindows = G · Wᵀ, folded back onto the overlapping inputs.
                    let mut dwin = vec![0.0; rows * kc];
                    gemm(
                        rows,
                        cout,
                        kc,
                        g,
                        (cout, 1),
                        w.data(),
                        (1, cout),
                        &mut dwin,
                        false,
                    );
                    for bi in 0..b {
                        for ti in 0..tout {
                            let base = bi * t * cin + ti * cin;
                            let src = &dwin[(bi * tout + ti) * kc..(bi * tout + ti + 1) * kc];
                            for (d, &v) in gx[base..base + kc].iter_mut().zip(src) {
                                *d += v;
                            }
                        }
                    }
                }
            }
            Op::Glu(a) => {
                let x = self.value(*a).data();
                let c = out.cols();
                if let Some(ga) = self.accum(grads, *a) {
                    for (r, gr) in g.chunks(c).enumerate() {
                        for j in 0..c {
                            let p = x[r * 2 * c + j];
                            let s = sigmoid(x[r * 2 * c + c + j]);
                            ga[r * 2 * c + j] += gr[j] * s;
                            ga[r * 2 * c + c + j] += gr[j] * p * s * (1.0 - s);
                        }
                    }
                }
            }
            Op::Dropout { input, mask } => {
                if let Some(ga) = self.accum(grads, *input) {
                    for ((x, &d), &m) in ga.iter_mut().zip(g).zip(mask) {
                        *x += d * m;
                    }
                }
            }
            Op::CrossEntropy { logits, label } => {
                let x = self.value(*logits).data();
                let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = x.iter().map(|v| (v - m).exp()).sum();
                if let Some(ga) = self.accum(grads, *logits) {
                    for j in 0..x.len() {
                        let p = (x[j] - m).exp() / s;
                        ga[j] += g[0] * (p - if j == *label { 1.0 } else { 0.0 });
                    }
                }
            }
        }
    }
}

/// Sliding windows of a `[b, t, cin]` series as a `[b·(t−k+1), k·cin]`
/// row-major matrix.
fn im2col(x: &[f64], b: usize, t: usize, cin: usize, k: usize) -> Vec<f64> {
    let tout = t - k + 1;
    let kc = k * cin;
    let mut cols = Vec::with_capacity(b * tout * kc);
    for bi in 0..b {
        for ti in 0..tout {
            let start = bi * t * cin + ti * cin;
            cols.extend_from_slice(&x[start..start + kc]);
        }
    }
    cols
}
