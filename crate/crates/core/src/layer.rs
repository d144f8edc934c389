//! The composed layer: attention over the disjoint weights, weight mixture,
//! kernel spatial modulation and frequency band modulation.
//!
//! Every stage has a pure implementation (used for inference and as the
//! reference in tests) and a tape implementation used for training.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::fbm::{self, BandMaskSet, FbmParams, DEFAULT_THRESHOLDS};
use crate::fdw::{mix_weights, FdwBasis, SpectralBank, DEFAULT_WEIGHT_COUNT};
use crate::ksm::{self, hidden_width, KsmParams, DEFAULT_WINDOW};
use crate::numerics::{conv2d_direct, PadMode, Tensor, WeightShape};

#[derive(Debug, Clone, PartialEq)]
pub struct FdConvConfig {
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub n: usize,
    pub thresholds: Vec<f64>,
    pub tau: f64,
    pub enable_ksm: bool,
    pub enable_fbm: bool,
    pub seed: u64,
}

impl Default for FdConvConfig {
    fn default() -> Self {
        Self {
            k: 3,
            c_in: 16,
            c_out: 16,
            n: DEFAULT_WEIGHT_COUNT,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            tau: 1.0,
            enable_ksm: true,
            enable_fbm: true,
            seed: 0,
        }
    }
}

impl FdConvConfig {
    pub fn shape(&self) -> WeightShape {
        WeightShape::new(self.k, self.c_in, self.c_out)
    }

    pub fn bands(&self) -> usize {
        self.thresholds.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("k must be odd, got {}", self.k)));
        }
        if self.c_in == 0 || self.c_out == 0 {
            return Err(Error::InvalidArgument(format!(
                "channel counts must be positive, got c_in = {}, c_out = {}",
                self.c_in, self.c_out
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        fbm::validate_thresholds(&self.thresholds)
    }
}

/// Pool → FC (reduction 16) → ReLU → FC to `n` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub fc1_weight: Tensor,
    pub fc1_bias: Tensor,
    pub fc2_weight: Tensor,
    pub fc2_bias: Tensor,
}

impl AttentionParams {
    fn init(c_in: usize, n: usize, rng: &mut ChaCha8Rng) -> Self {
        let hidden = hidden_width(c_in);
        let normal = Normal::new(0.0, (2.0 / c_in as f64).sqrt()).expect("positive deviation");
        Self {
            fc1_weight: Tensor::from_fn(&[c_in, hidden], |_| normal.sample(rng)),
            fc1_bias: Tensor::zeros(&[hidden]),
            fc2_weight: Tensor::zeros(&[hidden, n]),
            fc2_bias: Tensor::zeros(&[n]),
        }
    }

    pub fn param_count(&self) -> usize {
        self.fc1_weight.len() + self.fc1_bias.len() + self.fc2_weight.len() + self.fc2_bias.len()
    }
}

/// Attention logits for one sample.
pub fn attention_logits(x: &Tensor, params: &AttentionParams) -> Result<Tensor> {
    let d = ksm::channel_descriptor(x)?;
    let (c_in, hidden) = (params.fc1_weight.shape()[0], params.fc1_weight.shape()[1]);
    if d.len() != c_in {
        return Err(Error::shape(
            "attention_pi",
            format!("input has {} channels, head expects {c_in}", d.len()),
        ));
    }
    let n = params.fc2_bias.len();
    let mut h = params.fc1_bias.data().to_vec();
    for c in 0..c_in {
        for (j, hj) in h.iter_mut().enumerate() {
            *hj += d.data()[c] * params.fc1_weight.data()[c * hidden + j];
        }
    }
    let mut logits = params.fc2_bias.data().to_vec();
    for (j, &hj) in h.iter().enumerate() {
        let hj = hj.max(0.0);
        for (i, li) in logits.iter_mut().enumerate() {
            *li += hj * params.fc2_weight.data()[j * n + i];
        }
    }
    Ok(Tensor::from_parts(vec![n], logits))
}

/// `softmax(logits / τ)`.
pub fn softmax_with_temperature(logits: &[f64], tau: f64) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| ((v - max) / tau).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn attention_pi(x: &Tensor, params: &AttentionParams, tau: f64) -> Result<Vec<f64>> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    Ok(softmax_with_temperature(attention_logits(x, params)?.data(), tau))
}

/// All learnable state of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    config: FdConvConfig,
    basis: Arc<FdwBasis>,
    pub bank: SpectralBank,
    pub attention: AttentionParams,
    pub ksm: Option<KsmParams>,
    pub fbm: Option<FbmParams>,
}

impl LayerState {
    /// Seeded initialization: fan-in scaled bank, zero final stages on every
    /// head.
    pub fn init(config: &FdConvConfig) -> Result<Self> {
        config.validate()?;
        let shape = config.shape();
        let basis = Arc::new(FdwBasis::new(shape, config.n)?);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let bank = SpectralBank::init_kaiming(basis.table(), config.n, &mut rng)?;
        let attention = AttentionParams::init(config.c_in, config.n, &mut rng);
        let ksm = config
            .enable_ksm
            .then(|| KsmParams::init(shape, DEFAULT_WINDOW, &mut rng));
        let fbm = config.enable_fbm.then(|| FbmParams::zeros(config.c_in, config.bands()));
        Ok(Self {
            config: config.clone(),
            basis,
            bank,
            attention,
            ksm,
            fbm,
        })
    }

    pub fn config(&self) -> &FdConvConfig {
        &self.config
    }

    pub fn basis(&self) -> &Arc<FdwBasis> {
        &self.basis
    }

    pub fn shape(&self) -> WeightShape {
        self.config.shape()
    }

    /// Learnable tensors in canonical order with stable names.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = vec![
            ("fdw.bank", self.bank.params()),
            ("attn.fc1.weight", &self.attention.fc1_weight),
            ("attn.fc1.bias", &self.attention.fc1_bias),
            ("attn.fc2.weight", &self.attention.fc2_weight),
            ("attn.fc2.bias", &self.attention.fc2_bias),
        ];
        if let Some(k) = &self.ksm {
            out.extend([
                ("ksm.local.weight", &k.local_weight),
                ("ksm.local.bias", &k.local_bias),
                ("ksm.fc1.weight", &k.fc1_weight),
                ("ksm.fc1.bias", &k.fc1_bias),
                ("ksm.fc2.weight", &k.fc2_weight),
                ("ksm.fc2.bias", &k.fc2_bias),
            ]);
        }
        if let Some(f) = &self.fbm {
            out.extend([("fbm.pred.weight", &f.weight), ("fbm.pred.bias", &f.bias)]);
        }
        out
    }

    /// Mutable view in the same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![
            self.bank.params_mut(),
            &mut self.attention.fc1_weight,
            &mut self.attention.fc1_bias,
            &mut self.attention.fc2_weight,
            &mut self.attention.fc2_bias,
        ];
        if let Some(k) = &mut self.ksm {
            out.extend([
                &mut k.local_weight,
                &mut k.local_bias,
                &mut k.fc1_weight,
                &mut k.fc1_bias,
                &mut k.fc2_weight,
                &mut k.fc2_bias,
            ]);
        }
        if let Some(f) = &mut self.fbm {
            out.extend([&mut f.weight, &mut f.bias]);
        }
        out
    }

    /// The `n` group weights.
    pub fn weights(&self) -> Result<Vec<Tensor>> {
        self.basis.materialize(&self.bank)
    }

    /// Registers every learnable tensor on `tape` in canonical order.
    pub fn register(&self, tape: &mut Tape) -> LayerVars {
        let vars: Vec<Var> = self
            .named_tensors()
            .into_iter()
            .map(|(_, t)| tape.param(t.clone()))
            .collect();
        LayerVars { vars }
    }
}

/// Tape handles for a layer's parameters, canonical order.
#[derive(Debug, Clone)]
pub struct LayerVars {
    pub vars: Vec<Var>,
}

impl LayerVars {
    fn bank(&self) -> Var {
        self.vars[0]
    }
    fn attention(&self) -> &[Var] {
        &self.vars[1..5]
    }
    fn ksm(&self) -> &[Var] {
        &self.vars[5..11]
    }
    fn fbm(&self, has_ksm: bool) -> &[Var] {
        let start = if has_ksm { 11 } else { 5 };
        &self.vars[start..start + 2]
    }
}

/// Everything a forward pass computes for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub pi: Vec<f64>,
    pub mixed: Tensor,
    pub alpha: Option<Tensor>,
    pub modulated: Tensor,
    pub band_modulation: Option<Tensor>,
    pub output: Tensor,
}

fn check_input(x: &Tensor, config: &FdConvConfig) -> Result<(usize, usize)> {
    x.expect_rank(3, "fdconv_forward")?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if c != config.c_in {
        return Err(Error::shape(
            "fdconv_forward",
            format!("input has {c} channels, layer expects {}", config.c_in),
        ));
    }
    if h < config.k || w < config.k {
        return Err(Error::shape(
            "fdconv_forward",
            format!("feature {h}x{w} smaller than kernel {}", config.k),
        ));
    }
    Ok((h, w))
}

/// Pure forward pass that also returns intermediate values.
pub fn fdconv_trace(x: &Tensor, state: &LayerState) -> Result<ForwardTrace> {
    let config = state.config();
    let (h, w) = check_input(x, config)?;
    let pi = attention_pi(x, &state.attention, config.tau)?;
    let mixed = mix_weights(&state.weights()?, &pi)?;
    let alpha = match &state.ksm {
        Some(params) => Some(ksm::modulation_matrix(x, params, state.shape())?),
        None => None,
    };
    let modulated = match &alpha {
        Some(a) => ksm::apply_modulation(&mixed, a)?,
        None => mixed.clone(),
    };
    let (band_modulation, output) = match &state.fbm {
        Some(params) => {
            let masks = BandMaskSet::build(h, w, &config.thresholds)?;
            let a = fbm::predict_modulation(x, params)?;
            let y = fbm::fbm_forward(x, &modulated, &a, &masks)?;
            (Some(a), y)
        }
        None => (None, conv2d_direct(x, &modulated, PadMode::Circular)?),
    };
    Ok(ForwardTrace {
        pi,
        mixed,
        alpha,
        modulated,
        band_modulation,
        output,
    })
}

pub fn fdconv_forward(x: &Tensor, state: &LayerState) -> Result<Tensor> {
    Ok(fdconv_trace(x, state)?.output)
}

/// Plain circular convolution with a fixed weight.
pub fn static_conv_forward(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    conv2d_direct(x, w, PadMode::Circular)
}

/// Per-batch tape context: parameters registered once, group weights
/// materialized once and shared by every sample.
pub struct LayerGraph {
    state_config: FdConvConfig,
    vars: LayerVars,
    stack: Var,
    masks: Option<(usize, usize, Vec<Arc<Tensor>>)>,
}

impl LayerGraph {
    pub fn new(tape: &mut Tape, state: &LayerState) -> Result<Self> {
        let vars = state.register(tape);
        let shape = state.shape();
        let stack = tape.fdw_materialize(vars.bank(), Arc::clone(state.basis()))?;
        let stack = tape.reshape(stack, &[state.config().n, shape.len()])?;
        Ok(Self {
            state_config: state.config().clone(),
            vars,
            stack,
            masks: None,
        })
    }

    pub fn vars(&self) -> &LayerVars {
        &self.vars
    }

    fn masks(&mut self, h: usize, w: usize) -> Result<Vec<Arc<Tensor>>> {
        if let Some((mh, mw, m)) = &self.masks {
            if (*mh, *mw) == (h, w) {
                return Ok(m.clone());
            }
        }
        let set = BandMaskSet::build(h, w, &self.state_config.thresholds)?;
        let m: Vec<Arc<Tensor>> = set.masks().iter().cloned().map(Arc::new).collect();
        self.masks = Some((h, w, m.clone()));
        Ok(m)
    }

    fn dense(tape: &mut Tape, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let y = tape.matmul(input, weight)?;
        let n = tape.value(bias).len();
        let b = tape.expand(bias, &[1, n], &[1])?;
        tape.add(y, b)
    }

    /// Records the layer output for one `C_in×H×W` sample.
    pub fn forward(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        let config = self.state_config.clone();
        let (h, w) = check_input(tape.value(x), &config)?;
        let shape = config.shape();
        let has_ksm = config.enable_ksm;

        let d = tape.global_avg_pool(x)?;
        let d_row = tape.reshape(d, &[1, config.c_in])?;
        let att = self.vars.attention().to_vec();
        let hidden = Self::dense(tape, d_row, att[0], att[1])?;
        let hidden = tape.relu(hidden)?;
        let logits = Self::dense(tape, hidden, att[2], att[3])?;
        let pi = tape.softmax(logits, config.tau)?;

        let mixed = tape.matmul(pi, self.stack)?;
        let mut weight = tape.reshape(mixed, &shape.dims())?;

        if has_ksm {
            let kv = self.vars.ksm().to_vec();
            let dims = shape.dims();
            let local = tape.channel_conv1d(d, kv[0], kv[1], shape)?;
            let g = Self::dense(tape, d_row, kv[2], kv[3])?;
            let g = tape.relu(g)?;
            let g = Self::dense(tape, g, kv[4], kv[5])?;
            let g_in = tape.slice(g, 0, &[config.c_in])?;
            let g_out = tape.slice(g, config.c_in, &[config.c_out])?;
            let g_sp = tape.slice(g, config.c_in + config.c_out, &[config.k, config.k])?;
            let e_in = tape.expand(g_in, &dims, &[2])?;
            let e_out = tape.expand(g_out, &dims, &[3])?;
            let e_sp = tape.expand(g_sp, &dims, &[0, 1])?;
            let s = tape.add(local, e_in)?;
            let s = tape.add(s, e_out)?;
            let s = tape.add(s, e_sp)?;
            let s = tape.sigmoid(s)?;
            let alpha = tape.scale(s, 2.0)?;
            weight = tape.mul(weight, alpha)?;
        }

        let feature = if config.enable_fbm {
            let bands = config.bands();
            let fv = self.vars.fbm(has_ksm).to_vec();
            let masks = self.masks(h, w)?;
            let mut z = tape.band_filter(x, Arc::clone(&masks[0]))?;
            if bands > 1 {
                let logits = tape.conv2d(x, fv[0], PadMode::Zero)?;
                let bias = tape.expand(fv[1], &[bands - 1, h, w], &[0])?;
                let logits = tape.add(logits, bias)?;
                let planes = tape.sigmoid(logits)?;
                for (b, mask) in masks.iter().enumerate().skip(1) {
                    let xb = tape.band_filter(x, Arc::clone(mask))?;
                    let a = tape.slice(planes, (b - 1) * h * w, &[h, w])?;
                    let a = tape.expand(a, &[config.c_in, h, w], &[1, 2])?;
                    let term = tape.mul(a, xb)?;
                    z = tape.add(z, term)?;
                }
            }
            z
        } else {
            x
        };
        tape.conv2d(feature, weight, PadMode::Circular)
    }
}

/// Exact parameter tallies per component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCounts {
    pub bank: usize,
    pub attention: usize,
    pub ksm: usize,
    pub fbm: usize,
    pub total: usize,
}

pub fn param_count(config: &FdConvConfig) -> Result<ParamCounts> {
    config.validate()?;
    let (k, c_in, c_out, n) = (config.k, config.c_in, config.c_out, config.n);
    // Tallied from the constructed grouping, not from the closed form.
    let basis = FdwBasis::new(config.shape(), n)?;
    let bank = (0..n)
        .map(|g| basis.assignment().group_param_count(basis.table(), g))
        .sum();
    let hidden = hidden_width(c_in);
    let attention = c_in * hidden + hidden + hidden * n + n;
    let ksm = if config.enable_ksm {
        let rows = k * k * c_out;
        let heads = c_in + c_out + k * k;
        rows * DEFAULT_WINDOW + rows + c_in * hidden + hidden + hidden * heads + heads
    } else {
        0
    };
    let fbm = if config.enable_fbm {
        let outs = config.bands() - 1;
        fbm::PREDICTOR_KERNEL * fbm::PREDICTOR_KERNEL * c_in * outs + outs
    } else {
        0
    };
    Ok(ParamCounts {
        bank,
        attention,
        ksm,
        fbm,
        total: bank + attention + ksm + fbm,
    })
}

/// Real parameters an `n`-copy dynamic convolution would need at the same
/// shape.
pub fn n_copy_bank_count(config: &FdConvConfig) -> usize {
    config.n * config.k * config.k * config.c_in * config.c_out
}
