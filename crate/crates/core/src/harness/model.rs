//! Toy classifier: conv layer → ReLU → global average pool → linear → softmax.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::layer::{fdconv_forward, static_conv_forward, FdConvConfig, LayerGraph, LayerState};
use crate::numerics::{PadMode, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    FdConv,
    /// Plain convolution with one `k×k×C_in×C_out` weight.
    Static,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::FdConv => "fdconv",
            ModelKind::Static => "static",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fdconv" => Some(ModelKind::FdConv),
            "static" => Some(ModelKind::Static),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvLayer {
    FdConv(Box<LayerState>),
    Static(Tensor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet {
    pub conv: ConvLayer,
    /// `C_out × classes`, zero at initialization.
    pub head_weight: Tensor,
    pub head_bias: Tensor,
}

impl ToyNet {
    pub fn init(kind: ModelKind, config: &FdConvConfig, classes: usize) -> Result<Self> {
        let conv = match kind {
            ModelKind::FdConv => ConvLayer::FdConv(Box::new(LayerState::init(config)?)),
            ModelKind::Static => {
                config.validate()?;
                let shape = config.shape();
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                let std = (2.0 / (shape.k * shape.k * shape.c_in) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive deviation");
                ConvLayer::Static(Tensor::from_fn(&shape.dims(), |_| normal.sample(&mut rng)))
            }
        };
        Ok(Self {
            conv,
            head_weight: Tensor::zeros(&[config.c_out, classes]),
            head_bias: Tensor::zeros(&[classes]),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self.conv {
            ConvLayer::FdConv(_) => ModelKind::FdConv,
            ConvLayer::Static(_) => ModelKind::Static,
        }
    }

    pub fn classes(&self) -> usize {
        self.head_bias.len()
    }

    pub fn layer_state(&self) -> Option<&LayerState> {
        match &self.conv {
            ConvLayer::FdConv(s) => Some(s),
            ConvLayer::Static(_) => None,
        }
    }

    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = match &self.conv {
            ConvLayer::FdConv(s) => s.named_tensors(),
            ConvLayer::Static(w) => vec![("static.weight", w)],
        };
        out.push(("head.weight", &self.head_weight));
        out.push(("head.bias", &self.head_bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = match &mut self.conv {
            ConvLayer::FdConv(s) => s.tensors_mut(),
            ConvLayer::Static(w) => vec![w],
        };
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    /// Replaces every tensor from `(name, tensor)` records; names and shapes
    /// must match this model exactly.
    pub fn load_tensors(&mut self, records: &[(String, Tensor)]) -> Result<()> {
        let expected: Vec<(String, Vec<usize>)> = self
            .named_tensors()
            .iter()
            .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
            .collect();
        let got: Vec<(String, Vec<usize>)> = records.iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect();
        if expected != got {
            return Err(Error::shape(
                "load_tensors",
                format!("checkpoint records {got:?} do not match model layout {expected:?}"),
            ));
        }
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(records) {
            *dst = src.clone();
        }
        Ok(())
    }

    /// Class logits for one `C_in×H×W` sample.
    pub fn logits(&self, x: &Tensor) -> Result<Vec<f64>> {
        let y = match &self.conv {
            ConvLayer::FdConv(s) => fdconv_forward(x, s)?,
            ConvLayer::Static(w) => static_conv_forward(x, w)?,
        };
        let (c, plane) = (y.shape()[0], y.shape()[1] * y.shape()[2]);
        let classes = self.classes();
        let mut logits = self.head_bias.data().to_vec();
        for ch in 0..c {
            let pooled = y.data()[ch * plane..(ch + 1) * plane]
                .iter()
                .map(|v| v.max(0.0))
                .sum::<f64>()
                / plane as f64;
            for (j, l) in logits.iter_mut().enumerate() {
                *l += pooled * self.head_weight.data()[ch * classes + j];
            }
        }
        Ok(logits)
    }

    /// Arg-max class; ties go to the lowest index.
    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        let logits = self.logits(x)?;
        let mut best = 0;
        for (j, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = j;
            }
        }
        Ok(best)
    }
}

/// Tape context for one batch.
pub struct NetGraph {
    layer: Option<LayerGraph>,
    static_weight: Option<Var>,
    head_weight: Var,
    head_bias: Var,
    params: Vec<Var>,
}

impl NetGraph {
    pub fn new(tape: &mut Tape, net: &ToyNet) -> Result<Self> {
        let (layer, static_weight, mut params) = match &net.conv {
            ConvLayer::FdConv(state) => {
                let g = LayerGraph::new(tape, state)?;
                let params = g.vars().vars.clone();
                (Some(g), None, params)
            }
            ConvLayer::Static(w) => {
                let v = tape.param(w.clone());
                (None, Some(v), vec![v])
            }
        };
        let head_weight = tape.param(net.head_weight.clone());
        let head_bias = tape.param(net.head_bias.clone());
        params.extend([head_weight, head_bias]);
        Ok(Self {
            layer,
            static_weight,
            head_weight,
            head_bias,
            params,
        })
    }

    /// Parameter handles in [`ToyNet::tensors_mut`] order.
    pub fn params(&self) -> &[Var] {
        &self.params
    }

    /// Cross-entropy loss of one sample.
    pub fn sample_loss(&mut self, tape: &mut Tape, image: &Tensor, label: usize) -> Result<Var> {
        let x = tape.constant(image.clone());
        let y = match (&mut self.layer, self.static_weight) {
            (Some(layer), _) => layer.forward(tape, x)?,
            (None, Some(w)) => tape.conv2d(x, w, PadMode::Circular)?,
            (None, None) => unreachable!("one conv variant is always set"),
        };
        let r = tape.relu(y)?;
        let f = tape.global_avg_pool(r)?;
        let c = tape.value(f).len();
        let f = tape.reshape(f, &[1, c])?;
        let z = tape.matmul(f, self.head_weight)?;
        let classes = tape.value(self.head_bias).len();
        let b = tape.expand(self.head_bias, &[1, classes], &[1])?;
        let z = tape.add(z, b)?;
        tape.softmax_cross_entropy(z, label)
    }

    /// Mean loss over `(image, label)` pairs, accumulated in the given order.
    pub fn batch_loss<'a>(
        &mut self,
        tape: &mut Tape,
        batch: impl IntoIterator<Item = (&'a Tensor, usize)>,
    ) -> Result<Var> {
        let mut total: Option<Var> = None;
        let mut count = 0;
        for (image, label) in batch {
            let l = self.sample_loss(tape, image, label)?;
            total = Some(match total {
                Some(t) => tape.add(t, l)?,
                None => l,
            });
            count += 1;
        }
        let total = total.ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        tape.scale(total, 1.0 / count as f64)
    }
}
