//! Kernel spatial modulation.
//!
//! A pooled channel descriptor drives two branches: a 1-D convolution along
//! the channel axis that emits one logit per weight element, and a two-stage
//! fully connected map emitting input-channel, output-channel and
//! kernel-spatial logits. The branches are summed in logit space and squashed
//! with `2·sigmoid`, so all-zero logits leave the weight untouched.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fbm::sigmoid;
use crate::numerics::{Tensor, WeightShape};

/// Channel reduction of the global branch's hidden layer.
pub const REDUCTION: usize = 16;

/// Default window of the local 1-D convolution.
pub const DEFAULT_WINDOW: usize = 3;

/// Hidden width for a fully connected bottleneck over `channels` inputs.
pub fn hidden_width(channels: usize) -> usize {
    (channels / REDUCTION).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KsmParams {
    /// `k²·C_out × window`, row `(a·k + b)·C_out + o`.
    pub local_weight: Tensor,
    /// `k²·C_out`.
    pub local_bias: Tensor,
    /// `C_in × hidden`.
    pub fc1_weight: Tensor,
    pub fc1_bias: Tensor,
    /// `hidden × (C_in + C_out + k²)`.
    pub fc2_weight: Tensor,
    pub fc2_bias: Tensor,
}

impl KsmParams {
    /// First stage of the global branch drawn with fan-in scaling; both final
    /// stages are zero.
    pub fn init<R: Rng + ?Sized>(shape: WeightShape, window: usize, rng: &mut R) -> Self {
        let hidden = hidden_width(shape.c_in);
        let k2 = shape.k * shape.k;
        let normal = Normal::new(0.0, (2.0 / shape.c_in as f64).sqrt()).expect("positive deviation");
        Self {
            local_weight: Tensor::zeros(&[k2 * shape.c_out, window]),
            local_bias: Tensor::zeros(&[k2 * shape.c_out]),
            fc1_weight: Tensor::from_fn(&[shape.c_in, hidden], |_| normal.sample(rng)),
            fc1_bias: Tensor::zeros(&[hidden]),
            fc2_weight: Tensor::zeros(&[hidden, shape.c_in + shape.c_out + k2]),
            fc2_bias: Tensor::zeros(&[shape.c_in + shape.c_out + k2]),
        }
    }

    pub fn window(&self) -> usize {
        self.local_weight.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        [
            &self.local_weight,
            &self.local_bias,
            &self.fc1_weight,
            &self.fc1_bias,
            &self.fc2_weight,
            &self.fc2_bias,
        ]
        .iter()
        .map(|t| t.len())
        .sum()
    }
}

/// Per-channel spatial mean of a `C×H×W` feature.
pub fn channel_descriptor(x: &Tensor) -> Result<Tensor> {
    x.expect_rank(3, "channel_descriptor")?;
    let (c, plane) = (x.shape()[0], x.shape()[1] * x.shape()[2]);
    if plane == 0 {
        return Err(Error::InvalidArgument("channel_descriptor needs H, W >= 1".into()));
    }
    Ok(Tensor::from_fn(&[c], |ch| {
        x.data()[ch * plane..(ch + 1) * plane].iter().sum::<f64>() / plane as f64
    }))
}

/// 1-D convolution along the descriptor with zero padding; the result is laid
/// out on the `k×k×C_in×C_out` lattice so descriptor position `c` feeds input
/// channel `c`.
pub fn local_branch(d: &Tensor, params: &KsmParams, shape: WeightShape) -> Result<Tensor> {
    check_descriptor(d, shape)?;
    let k2 = shape.k * shape.k;
    let window = params.window();
    if params.local_weight.shape() != [k2 * shape.c_out, window] || params.local_bias.len() != k2 * shape.c_out {
        return Err(Error::shape(
            "local_branch",
            format!(
                "weight {:?} / bias {:?} do not fit {shape:?}",
                params.local_weight.shape(),
                params.local_bias.shape()
            ),
        ));
    }
    let half = (window / 2) as isize;
    let wd = params.local_weight.data();
    let mut out = vec![0.0; shape.len()];
    for a in 0..shape.k {
        for b in 0..shape.k {
            for o in 0..shape.c_out {
                let row = (a * shape.k + b) * shape.c_out + o;
                for c in 0..shape.c_in {
                    let mut acc = params.local_bias.data()[row];
                    for t in 0..window {
                        let src = c as isize + t as isize - half;
                        if src >= 0 && (src as usize) < shape.c_in {
                            acc += wd[row * window + t] * d.data()[src as usize];
                        }
                    }
                    out[shape.offset(a, b, c, o)] = acc;
                }
            }
        }
    }
    Ok(Tensor::from_parts(shape.dims().to_vec(), out))
}

/// Logits from the global branch, in the order (input channel, output
/// channel, kernel spatial).
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalLogits {
    pub in_channel: Tensor,
    pub out_channel: Tensor,
    pub spatial: Tensor,
}

fn dense(input: &[f64], weight: &Tensor, bias: &Tensor) -> Vec<f64> {
    let (rows, cols) = (weight.shape()[0], weight.shape()[1]);
    let mut out = bias.data().to_vec();
    for (r, &v) in input.iter().enumerate().take(rows) {
        for (c, dst) in out.iter_mut().enumerate().take(cols) {
            *dst += v * weight.data()[r * cols + c];
        }
    }
    out
}

pub fn global_branch(d: &Tensor, params: &KsmParams, shape: WeightShape) -> Result<GlobalLogits> {
    check_descriptor(d, shape)?;
    let k2 = shape.k * shape.k;
    let hidden = params.fc1_weight.shape().get(1).copied().unwrap_or(0);
    let total = shape.c_in + shape.c_out + k2;
    if params.fc1_weight.shape() != [shape.c_in, hidden]
        || params.fc1_bias.len() != hidden
        || params.fc2_weight.shape() != [hidden, total]
        || params.fc2_bias.len() != total
    {
        return Err(Error::shape(
            "global_branch",
            format!(
                "fc1 {:?}, fc2 {:?} do not fit {shape:?}",
                params.fc1_weight.shape(),
                params.fc2_weight.shape()
            ),
        ));
    }
    let h: Vec<f64> = dense(d.data(), &params.fc1_weight, &params.fc1_bias)
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    let g = dense(&h, &params.fc2_weight, &params.fc2_bias);
    Ok(GlobalLogits {
        in_channel: Tensor::from_parts(vec![shape.c_in], g[..shape.c_in].to_vec()),
        out_channel: Tensor::from_parts(vec![shape.c_out], g[shape.c_in..shape.c_in + shape.c_out].to_vec()),
        spatial: Tensor::from_parts(vec![k2], g[shape.c_in + shape.c_out..].to_vec()),
    })
}

/// `α = 2·sigmoid(L + g_in[c] + g_out[o] + g_spatial[a·k + b])`.
pub fn fuse(local: &Tensor, global: &GlobalLogits) -> Result<Tensor> {
    let shape = WeightShape::of(local)?;
    if global.in_channel.len() != shape.c_in
        || global.out_channel.len() != shape.c_out
        || global.spatial.len() != shape.k * shape.k
    {
        return Err(Error::shape(
            "fuse",
            format!(
                "global logits ({}, {}, {}) do not fit local {:?}",
                global.in_channel.len(),
                global.out_channel.len(),
                global.spatial.len(),
                local.shape()
            ),
        ));
    }
    let mut out = vec![0.0; shape.len()];
    for a in 0..shape.k {
        for b in 0..shape.k {
            for c in 0..shape.c_in {
                for o in 0..shape.c_out {
                    let off = shape.offset(a, b, c, o);
                    let logit = local.data()[off]
                        + global.in_channel.data()[c]
                        + global.out_channel.data()[o]
                        + global.spatial.data()[a * shape.k + b];
                    out[off] = 2.0 * sigmoid(logit);
                }
            }
        }
    }
    Ok(Tensor::from_parts(shape.dims().to_vec(), out))
}

/// Elementwise `W ⊙ α`.
pub fn apply_modulation(w: &Tensor, alpha: &Tensor) -> Result<Tensor> {
    w.mul(alpha)
}

/// Full modulation matrix for one sample.
pub fn modulation_matrix(x: &Tensor, params: &KsmParams, shape: WeightShape) -> Result<Tensor> {
    let d = channel_descriptor(x)?;
    fuse(&local_branch(&d, params, shape)?, &global_branch(&d, params, shape)?)
}

fn check_descriptor(d: &Tensor, shape: WeightShape) -> Result<()> {
    if d.shape() != [shape.c_in] {
        return Err(Error::shape(
            "ksm",
            format!("descriptor {:?} but C_in = {}", d.shape(), shape.c_in),
        ));
    }
    Ok(())
}
