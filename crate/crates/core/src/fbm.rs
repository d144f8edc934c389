//! Frequency band modulation.
//!
//! Features are split into disjoint octave bands with binary masks on the
//! centered normalized frequency `max(|u/H|, |v/W|)`, every band gets a
//! per-location gain map, and the recombined feature is convolved once.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{centered, channel, conv2d_direct, dft2, idft2, ComplexGrid, PadMode, Tensor};

/// Octave thresholds `{0, 1/16, 1/8, 1/4, 1/2}`.
pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 0.5];

/// Spatial extent of the modulation predictor kernel.
pub const PREDICTOR_KERNEL: usize = 3;

/// Largest imaginary residue tolerated after band filtering.
pub const RESIDUE_TOL: f64 = 1e-10;

/// Checks `0 = ψ_0 < ψ_1 < … < ψ_B = 1/2`.
pub fn validate_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "band thresholds need at least two entries, got {thresholds:?}"
        )));
    }
    if thresholds[0] != 0.0 || *thresholds.last().unwrap() != 0.5 {
        return Err(Error::InvalidArgument(format!(
            "band thresholds must start at 0 and end at 1/2, got {thresholds:?}"
        )));
    }
    if thresholds
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
    {
        return Err(Error::InvalidArgument(format!(
            "band thresholds must be strictly ascending, got {thresholds:?}"
        )));
    }
    Ok(())
}

/// One binary, conjugate-symmetric mask per band, stored in DFT order.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMaskSet {
    height: usize,
    width: usize,
    thresholds: Vec<f64>,
    masks: Vec<Tensor>,
}

/// Normalized radial frequency `max(|u/H|, |v/W|)` of storage cell `(r, c)`.
pub fn octave_radius(r: usize, c: usize, height: usize, width: usize) -> f64 {
    let fu = (centered(r, height) as f64 / height as f64).abs();
    let fv = (centered(c, width) as f64 / width as f64).abs();
    fu.max(fv)
}

/// Band holding normalized radius `f`; the top band's upper edge is inclusive.
pub fn band_of(f: f64, thresholds: &[f64]) -> usize {
    let bands = thresholds.len() - 1;
    (0..bands)
        .find(|&b| thresholds[b] <= f && f < thresholds[b + 1])
        .unwrap_or(bands - 1)
}

impl BandMaskSet {
    pub fn build(height: usize, width: usize, thresholds: &[f64]) -> Result<Self> {
        validate_thresholds(thresholds)?;
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "band masks need positive extents, got {height}x{width}"
            )));
        }
        let bands = thresholds.len() - 1;
        let mut masks = vec![vec![0.0; height * width]; bands];
        for r in 0..height {
            for c in 0..width {
                let b = band_of(octave_radius(r, c, height, width), thresholds);
                masks[b][r * width + c] = 1.0;
            }
        }
        Ok(Self {
            height,
            width,
            thresholds: thresholds.to_vec(),
            masks: masks
                .into_iter()
                .map(|m| Tensor::from_parts(vec![height, width], m))
                .collect(),
        })
    }

    pub fn bands(&self) -> usize {
        self.masks.len()
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn mask(&self, band: usize) -> &Tensor {
        &self.masks[band]
    }

    pub fn masks(&self) -> &[Tensor] {
        &self.masks
    }
}

/// Per channel `iDFT(mask ⊙ DFT(x_c))`.
pub fn band_filter(x: &Tensor, mask: &Tensor) -> Result<Tensor> {
    x.expect_rank(3, "band_filter")?;
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if mask.shape() != [h, w] {
        return Err(Error::shape(
            "band_filter",
            format!("mask {:?} does not match feature extent {h}x{w}", mask.shape()),
        ));
    }
    // A full mask is the identity; skip the round trip so one band is exact.
    if mask.data().iter().all(|&m| m == 1.0) {
        return Ok(x.clone());
    }
    let mut out = Vec::with_capacity(x.len());
    for ch in 0..c {
        let spectrum = dft2(&channel(x, ch))?;
        let filtered: Vec<Complex64> = spectrum.data().iter().zip(mask.data()).map(|(z, &m)| z * m).collect();
        let spatial = idft2(&ComplexGrid::from_parts(h, w, filtered))?.real_checked(RESIDUE_TOL, "band_filter")?;
        out.extend_from_slice(spatial.data());
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

/// All `B` band components of `x`.
pub fn decompose(x: &Tensor, masks: &BandMaskSet) -> Result<Vec<Tensor>> {
    masks.masks().iter().map(|m| band_filter(x, m)).collect()
}

/// Predictor for planes `1..B` of the band modulation: a zero-padded 3×3
/// convolution `C → B-1` followed by a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmParams {
    /// `3×3×C×(B-1)`.
    pub weight: Tensor,
    /// `B-1`.
    pub bias: Tensor,
}

impl FbmParams {
    pub fn zeros(channels: usize, bands: usize) -> Self {
        let outs = bands.saturating_sub(1);
        Self {
            weight: Tensor::zeros(&[PREDICTOR_KERNEL, PREDICTOR_KERNEL, channels, outs]),
            bias: Tensor::zeros(&[outs]),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `B×H×W` modulation maps: plane 0 is all ones, planes `1..B` come from the
/// predictor.
pub fn predict_modulation(x: &Tensor, params: &FbmParams) -> Result<Tensor> {
    x.expect_rank(3, "predict_modulation")?;
    let (h, w) = (x.shape()[1], x.shape()[2]);
    let outs = params.bias.len();
    if params.weight.shape().get(3) != Some(&outs) {
        return Err(Error::shape(
            "predict_modulation",
            format!(
                "predictor weight {:?} vs bias {:?}",
                params.weight.shape(),
                params.bias.shape()
            ),
        ));
    }
    let logits = conv2d_direct(x, &params.weight, PadMode::Zero)?;
    let mut out = vec![1.0; h * w];
    out.reserve(outs * h * w);
    for (o, &b) in params.bias.data().iter().enumerate() {
        out.extend(
            logits.data()[o * h * w..(o + 1) * h * w]
                .iter()
                .map(|&v| sigmoid(v + b)),
        );
    }
    Ok(Tensor::from_parts(vec![outs + 1, h, w], out))
}

fn check_modulation(x: &Tensor, modulation: &Tensor, masks: &BandMaskSet) -> Result<()> {
    x.expect_rank(3, "fbm_forward")?;
    let (h, w) = (x.shape()[1], x.shape()[2]);
    if modulation.shape() != [masks.bands(), h, w] {
        return Err(Error::shape(
            "fbm_forward",
            format!(
                "modulation {:?} must be {}x{h}x{w} to match {} bands",
                modulation.shape(),
                masks.bands(),
                masks.bands()
            ),
        ));
    }
    if masks.extent() != (h, w) {
        return Err(Error::shape(
            "fbm_forward",
            format!("masks are {:?}, feature is {h}x{w}", masks.extent()),
        ));
    }
    Ok(())
}

/// Scales every channel of `x` by the `H×W` plane `band` of `modulation`.
fn modulate(x: &Tensor, modulation: &Tensor, band: usize) -> Tensor {
    let (h, w) = (x.shape()[1], x.shape()[2]);
    let plane = &modulation.data()[band * h * w..(band + 1) * h * w];
    Tensor::from_fn(x.shape(), |i| x.data()[i] * plane[i % (h * w)])
}

/// Production path: `Y = (Σ_b A_b ⊙ X_b) ⋆ W`, one circular convolution.
pub fn fbm_forward(x: &Tensor, w: &Tensor, modulation: &Tensor, masks: &BandMaskSet) -> Result<Tensor> {
    check_modulation(x, modulation, masks)?;
    let mut mixed = Tensor::zeros(x.shape());
    for (b, xb) in decompose(x, masks)?.iter().enumerate() {
        mixed = mixed.add(&modulate(xb, modulation, b))?;
    }
    conv2d_direct(&mixed, w, PadMode::Circular)
}

/// Reference path: `Y = Σ_b A_b ⊙ (X_b ⋆ W)`. Agrees with [`fbm_forward`]
/// only when every `A_b` is spatially constant.
pub fn fbm_forward_postmod(x: &Tensor, w: &Tensor, modulation: &Tensor, masks: &BandMaskSet) -> Result<Tensor> {
    check_modulation(x, modulation, masks)?;
    let mut out: Option<Tensor> = None;
    for (b, xb) in decompose(x, masks)?.iter().enumerate() {
        let yb = modulate(&conv2d_direct(xb, w, PadMode::Circular)?, modulation, b);
        out = Some(match out {
            Some(acc) => acc.add(&yb)?,
            None => yb,
        });
    }
    Ok(out.expect("at least one band"))
}
