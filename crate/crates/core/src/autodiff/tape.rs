use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fbm::{band_filter, sigmoid};
use crate::fdw::FdwBasis;
use crate::numerics::{conv2d_backward, conv2d_direct, PadMode, Tensor, WeightShape};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// A recorded operation. Inputs always refer to earlier nodes.
#[derive(Debug, Clone)]
pub enum Op {
    /// Parameter or constant.
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// `[m, k] × [k, n]`.
    MatMul(Var, Var),
    /// `C_in×H×W` with `k×k×C_in×C_out` → `C_out×H×W`.
    Conv2d {
        x: Var,
        w: Var,
        mode: PadMode,
    },
    /// `C×H×W` → `C`.
    GlobalAvgPool(Var),
    Relu(Var),
    Sigmoid(Var),
    /// Softmax over all elements of `logits / tau`.
    Softmax {
        x: Var,
        tau: f64,
    },
    Reshape {
        x: Var,
        shape: Vec<usize>,
    },
    /// Per channel `iDFT(mask ⊙ DFT(x))`.
    BandFilter {
        x: Var,
        mask: Arc<Tensor>,
    },
    /// Bank coefficients → `n×k×k×C_in×C_out` stack of group weights.
    FdwMaterialize {
        bank: Var,
        basis: Arc<FdwBasis>,
    },
    /// Sum of all elements, rank-0 result.
    Sum(Var),
    /// Broadcast: input dim `d` maps to output axis `axes[d]`, every other
    /// output axis is replicated.
    Expand {
        x: Var,
        shape: Vec<usize>,
        axes: Vec<usize>,
    },
    /// Contiguous flat range starting at `offset`, viewed as `shape`.
    Slice {
        x: Var,
        offset: usize,
        shape: Vec<usize>,
    },
    /// Zero-padded 1-D convolution along a `C_in` descriptor producing a
    /// `k×k×C_in×C_out` lattice; weight is `k²·C_out × window`.
    ChannelConv1d {
        d: Var,
        weight: Var,
        bias: Var,
        shape: WeightShape,
    },
    /// `-log softmax(logits)[label]`, rank-0 result.
    SoftmaxCrossEntropy {
        logits: Var,
        label: usize,
    },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Mul(..) => "multiply",
            Op::Scale(..) => "scale",
            Op::MatMul(..) => "matmul",
            Op::Conv2d { .. } => "conv2d",
            Op::GlobalAvgPool(..) => "global-average-pool",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Softmax { .. } => "softmax",
            Op::Reshape { .. } => "reshape",
            Op::BandFilter { .. } => "band-filter",
            Op::FdwMaterialize { .. } => "fdw-materialize",
            Op::Sum(..) => "sum",
            Op::Expand { .. } => "expand",
            Op::Slice { .. } => "slice",
            Op::ChannelConv1d { .. } => "channel-conv1d",
            Op::SoftmaxCrossEntropy { .. } => "softmax-cross-entropy",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::Scale(x, _)
            | Op::GlobalAvgPool(x)
            | Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Sum(x)
            | Op::Softmax { x, .. }
            | Op::Reshape { x, .. }
            | Op::BandFilter { x, .. }
            | Op::Expand { x, .. }
            | Op::Slice { x, .. } => vec![*x],
            Op::Conv2d { x, w, .. } => vec![*x, *w],
            Op::FdwMaterialize { bank, .. } => vec![*bank],
            Op::ChannelConv1d { d, weight, bias, .. } => vec![*d, *weight, *bias],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only record of a computation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Var>,
}

/// Gradients keyed by node.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap {
    grads: Vec<Option<Tensor>>,
}

impl GradientMap {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or an error naming the missing node.
    pub fn expect(&self, var: Var) -> Result<&Tensor> {
        self.get(var)
            .ok_or_else(|| Error::Consistency(format!("no gradient recorded for node {}", var.0)))
    }
}

fn softmax(x: &[f64], tau: f64) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| ((v - max) / tau).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn matmul_dims(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::shape("matmul", format!("{:?} × {:?}", a.shape(), b.shape())));
    }
    Ok((a.shape()[0], a.shape()[1], b.shape()[1]))
}

fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += av * b[p * n + j];
            }
        }
    }
    out
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// For each flat output index of an expand, the flat input index it reads.
fn expand_map(src: &[usize], shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let out_strides = strides(shape);
    let src_strides = strides(src);
    let total: usize = shape.iter().product();
    (0..total)
        .map(|flat| {
            axes.iter()
                .zip(&src_strides)
                .map(|(&axis, &s)| (flat / out_strides[axis]) % shape[axis] * s)
                .sum()
        })
        .collect()
}

fn check_expand(src: &[usize], shape: &[usize], axes: &[usize]) -> Result<()> {
    let ok = axes.len() == src.len()
        && axes.windows(2).all(|w| w[0] < w[1])
        && axes
            .iter()
            .zip(src)
            .all(|(&axis, &extent)| axis < shape.len() && shape[axis] == extent);
    if !ok {
        return Err(Error::shape(
            "expand",
            format!("cannot broadcast {src:?} into {shape:?} along axes {axes:?}"),
        ));
    }
    Ok(())
}

fn channel_conv1d(d: &[f64], weight: &Tensor, bias: &[f64], shape: WeightShape) -> Vec<f64> {
    let window = weight.shape()[1];
    let half = (window / 2) as isize;
    let w = weight.data();
    let mut out = vec![0.0; shape.len()];
    for a in 0..shape.k {
        for b in 0..shape.k {
            for o in 0..shape.c_out {
                let row = (a * shape.k + b) * shape.c_out + o;
                for c in 0..shape.c_in {
                    let mut acc = bias[row];
                    for t in 0..window {
                        let src = c as isize + t as isize - half;
                        if src >= 0 && (src as usize) < shape.c_in {
                            acc += w[row * window + t] * d[src as usize];
                        }
                    }
                    out[shape.offset(a, b, c, o)] = acc;
                }
            }
        }
    }
    out
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

    /// Registers a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        let var = self.push(Op::Leaf, value);
        self.params.push(var);
        var
    }

    /// Adds a non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn params(&self) -> &[Var] {
        &self.params
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn op(&self, var: Var) -> &Op {
        &self.nodes[var.0].op
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Evaluates `op` against the current node values and appends it.
    pub fn record(&mut self, op: Op) -> Result<Var> {
        if matches!(op, Op::Leaf) {
            return Err(Error::InvalidArgument(
                "leaves are added with param() or constant()".into(),
            ));
        }
        for input in op.inputs() {
            if input.0 >= self.nodes.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} refers to unknown node {}",
                    op.name(),
                    input.0
                )));
            }
        }
        let value = self.forward(&op)?;
        Ok(self.push(op, value))
    }

    fn forward(&self, op: &Op) -> Result<Tensor> {
        let v = |var: &Var| &self.nodes[var.0].value;
        Ok(match op {
            Op::Leaf => unreachable!("leaves carry their own value"),
            Op::Add(a, b) => v(a).add(v(b))?,
            Op::Mul(a, b) => v(a).mul(v(b))?,
            Op::Scale(x, c) => v(x).scale(*c),
            Op::MatMul(a, b) => {
                let (m, k, n) = matmul_dims(v(a), v(b))?;
                Tensor::from_parts(vec![m, n], matmul(v(a).data(), v(b).data(), m, k, n))
            }
            Op::Conv2d { x, w, mode } => conv2d_direct(v(x), v(w), *mode)?,
            Op::GlobalAvgPool(x) => {
                let x = v(x);
                x.expect_rank(3, "global-average-pool")?;
                crate::ksm::channel_descriptor(x)?
            }
            Op::Relu(x) => v(x).map(|e| e.max(0.0)),
            Op::Sigmoid(x) => v(x).map(sigmoid),
            Op::Softmax { x, tau } => {
                if tau.is_nan() || *tau <= 0.0 {
                    return Err(Error::InvalidArgument(format!("softmax temperature {tau} must be > 0")));
                }
                let x = v(x);
                Tensor::from_parts(x.shape().to_vec(), softmax(x.data(), *tau))
            }
            Op::Reshape { x, shape } => v(x).reshape(shape)?,
            Op::BandFilter { x, mask } => band_filter(v(x), mask)?,
            Op::FdwMaterialize { bank, basis } => {
                let bank = v(bank);
                let s = basis.shape();
                let mut data = Vec::with_capacity(basis.n() * s.len());
                for g in 0..basis.n() {
                    data.extend_from_slice(basis.materialize_group(bank, g)?.data());
                }
                let mut shape = vec![basis.n()];
                shape.extend(s.dims());
                Tensor::from_parts(shape, data)
            }
            Op::Sum(x) => Tensor::scalar(v(x).sum()),
            Op::Expand { x, shape, axes } => {
                let x = v(x);
                check_expand(x.shape(), shape, axes)?;
                let map = expand_map(x.shape(), shape, axes);
                Tensor::from_parts(shape.clone(), map.iter().map(|&i| x.data()[i]).collect())
            }
            Op::Slice { x, offset, shape } => {
                let x = v(x);
                let len: usize = shape.iter().product();
                if offset + len > x.len() {
                    return Err(Error::shape(
                        "slice",
                        format!("range {offset}..{} outside {:?}", offset + len, x.shape()),
                    ));
                }
                Tensor::from_parts(shape.clone(), x.data()[*offset..offset + len].to_vec())
            }
            Op::ChannelConv1d { d, weight, bias, shape } => {
                let (d, weight, bias) = (v(d), v(weight), v(bias));
                let rows = shape.k * shape.k * shape.c_out;
                if d.shape() != [shape.c_in]
                    || weight.rank() != 2
                    || weight.shape()[0] != rows
                    || bias.shape() != [rows]
                {
                    return Err(Error::shape(
                        "channel-conv1d",
                        format!(
                            "descriptor {:?}, weight {:?}, bias {:?} for {shape:?}",
                            d.shape(),
                            weight.shape(),
                            bias.shape()
                        ),
                    ));
                }
                Tensor::from_parts(
                    shape.dims().to_vec(),
                    channel_conv1d(d.data(), weight, bias.data(), *shape),
                )
            }
            Op::SoftmaxCrossEntropy { logits, label } => {
                let z = v(logits);
                if *label >= z.len() {
                    return Err(Error::shape(
                        "softmax-cross-entropy",
                        format!("label {label} outside {} classes", z.len()),
                    ));
                }
                let max = z.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + z.data().iter().map(|&e| (e - max).exp()).sum::<f64>().ln();
                Tensor::scalar(lse - z.data()[*label])
            }
        })
    }

    /// Recomputes every non-leaf node and reports the first one whose value
    /// differs bitwise from the recorded value.
    pub fn replay(&self) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let again = self.forward(&node.op)?;
            let same = again.shape() == node.value.shape()
                && again
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                return Err(Error::Consistency(format!(
                    "replay of node {i} ({}) differs from the recorded value",
                    node.op.name()
                )));
            }
        }
        Ok(())
    }

    /// Reverse-mode gradients of `⟨seed, output⟩` with respect to every node
    /// the output depends on. Every registered parameter gets an entry.
    pub fn backprop(&self, output: Var, seed: &Tensor) -> Result<GradientMap> {
        let out_value = &self.nodes[output.0].value;
        if seed.shape() != out_value.shape() {
            return Err(Error::shape(
                "backprop",
                format!("seed {:?} vs output {:?}", seed.shape(), out_value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed.clone());
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        for &p in &self.params {
            if grads[p.0].is_none() {
                grads[p.0] = Some(Tensor::zeros(self.nodes[p.0].value.shape()));
            }
        }
        Ok(GradientMap { grads })
    }

    /// Gradient of a rank-0 output with unit seed.
    pub fn grad(&self, output: Var) -> Result<GradientMap> {
        let seed = Tensor::ones(self.nodes[output.0].value.shape());
        self.backprop(output, &seed)
    }

    fn backward_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        fn acc(grads: &mut [Option<Tensor>], var: Var, delta: Tensor) {
            match &mut grads[var.0] {
                Some(existing) => {
                    for (d, s) in existing.data_mut().iter_mut().zip(delta.data()) {
                        *d += s;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        }
        let node = &self.nodes[i];
        let v = |var: &Var| &self.nodes[var.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Mul(a, b) => {
                acc(grads, *a, g.mul(v(b))?);
                acc(grads, *b, g.mul(v(a))?);
            }
            Op::Scale(x, c) => acc(grads, *x, g.scale(*c)),
            Op::MatMul(a, b) => {
                let (m, k, n) = matmul_dims(v(a), v(b))?;
                let bt = transpose(v(b).data(), k, n);
                let at = transpose(v(a).data(), m, k);
                acc(
                    grads,
                    *a,
                    Tensor::from_parts(vec![m, k], matmul(g.data(), &bt, m, n, k)),
                );
                acc(
                    grads,
                    *b,
                    Tensor::from_parts(vec![k, n], matmul(&at, g.data(), k, m, n)),
                );
            }
            Op::Conv2d { x, w, mode } => {
                let (gx, gw) = conv2d_backward(v(x), v(w), g, *mode)?;
                acc(grads, *x, gx);
                acc(grads, *w, gw);
            }
            Op::GlobalAvgPool(x) => {
                let shape = v(x).shape();
                let plane = shape[1] * shape[2];
                let inv = 1.0 / plane as f64;
                acc(grads, *x, Tensor::from_fn(shape, |j| g.data()[j / plane] * inv));
            }
            Op::Relu(x) => {
                acc(
                    grads,
                    *x,
                    g.zip_with(v(x), "relu", |gv, xv| if xv > 0.0 { gv } else { 0.0 })?,
                );
            }
            Op::Sigmoid(x) => {
                acc(
                    grads,
                    *x,
                    g.zip_with(&node.value, "sigmoid", |gv, y| gv * y * (1.0 - y))?,
                );
            }
            Op::Softmax { x, tau } => {
                let y = &node.value;
                let inner = g.dot(y)?;
                acc(grads, *x, g.zip_with(y, "softmax", |gv, yv| yv * (gv - inner) / tau)?);
            }
            Op::Reshape { x, .. } => acc(grads, *x, g.reshape(v(x).shape())?),
            Op::BandFilter { x, mask } => acc(grads, *x, band_filter(g, mask)?),
            Op::FdwMaterialize { bank, basis } => {
                let per = basis.shape().len();
                let mut full = vec![0.0; v(bank).len()];
                for group in 0..basis.n() {
                    let slice = Tensor::from_parts(
                        basis.shape().dims().to_vec(),
                        g.data()[group * per..(group + 1) * per].to_vec(),
                    );
                    basis.adjoint_group_into(&slice, group, &mut full)?;
                }
                acc(grads, *bank, Tensor::from_parts(v(bank).shape().to_vec(), full));
            }
            Op::Sum(x) => acc(grads, *x, Tensor::full(v(x).shape(), g.data()[0])),
            Op::Expand { x, shape, axes } => {
                let src = v(x).shape();
                let map = expand_map(src, shape, axes);
                let mut out = vec![0.0; v(x).len()];
                for (t, &s) in map.iter().enumerate() {
                    out[s] += g.data()[t];
                }
                acc(grads, *x, Tensor::from_parts(src.to_vec(), out));
            }
            Op::Slice { x, offset, .. } => {
                let mut out = vec![0.0; v(x).len()];
                out[*offset..offset + g.len()].copy_from_slice(g.data());
                acc(grads, *x, Tensor::from_parts(v(x).shape().to_vec(), out));
            }
            Op::ChannelConv1d { d, weight, bias, shape } => {
                let (dv, wv) = (v(d), v(weight));
                let window = wv.shape()[1];
                let half = (window / 2) as isize;
                let mut gd = vec![0.0; dv.len()];
                let mut gw = vec![0.0; wv.len()];
                let mut gb = vec![0.0; v(bias).len()];
                for a in 0..shape.k {
                    for b in 0..shape.k {
                        for o in 0..shape.c_out {
                            let row = (a * shape.k + b) * shape.c_out + o;
                            for c in 0..shape.c_in {
                                let go = g.data()[shape.offset(a, b, c, o)];
                                gb[row] += go;
                                for t in 0..window {
                                    let src = c as isize + t as isize - half;
                                    if src >= 0 && (src as usize) < shape.c_in {
                                        gw[row * window + t] += go * dv.data()[src as usize];
                                        gd[src as usize] += go * wv.data()[row * window + t];
                                    }
                                }
                            }
                        }
                    }
                }
                acc(grads, *d, Tensor::from_parts(dv.shape().to_vec(), gd));
                acc(grads, *weight, Tensor::from_parts(wv.shape().to_vec(), gw));
                acc(grads, *bias, Tensor::from_parts(v(bias).shape().to_vec(), gb));
            }
            Op::SoftmaxCrossEntropy { logits, label } => {
                let z = v(logits);
                let mut p = softmax(z.data(), 1.0);
                p[*label] -= 1.0;
                let scale = g.data()[0];
                acc(
                    grads,
                    *logits,
                    Tensor::from_parts(z.shape().to_vec(), p.into_iter().map(|e| e * scale).collect()),
                );
            }
        }
        Ok(())
    }

    // Convenience wrappers around `record`.

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.record(Op::Scale(x, factor))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::MatMul(a, b))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, mode: PadMode) -> Result<Var> {
        self.record(Op::Conv2d { x, w, mode })
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        self.record(Op::GlobalAvgPool(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.record(Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.record(Op::Sigmoid(x))
    }

    pub fn softmax(&mut self, x: Var, tau: f64) -> Result<Var> {
        self.record(Op::Softmax { x, tau })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.record(Op::Reshape {
            x,
            shape: shape.to_vec(),
        })
    }

    pub fn band_filter(&mut self, x: Var, mask: Arc<Tensor>) -> Result<Var> {
        self.record(Op::BandFilter { x, mask })
    }

    pub fn fdw_materialize(&mut self, bank: Var, basis: Arc<FdwBasis>) -> Result<Var> {
        self.record(Op::FdwMaterialize { bank, basis })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.record(Op::Sum(x))
    }

    pub fn expand(&mut self, x: Var, shape: &[usize], axes: &[usize]) -> Result<Var> {
        self.record(Op::Expand {
            x,
            shape: shape.to_vec(),
            axes: axes.to_vec(),
        })
    }

    pub fn slice(&mut self, x: Var, offset: usize, shape: &[usize]) -> Result<Var> {
        self.record(Op::Slice {
            x,
            offset,
            shape: shape.to_vec(),
        })
    }

    pub fn channel_conv1d(&mut self, d: Var, weight: Var, bias: Var, shape: WeightShape) -> Result<Var> {
        self.record(Op::ChannelConv1d { d, weight, bias, shape })
    }

    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        self.record(Op::SoftmaxCrossEntropy { logits, label })
    }
}
