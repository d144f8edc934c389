//! Synthetic frequency-band classification data.
//!
//! Each image is a sum of three random 2-D cosines whose centered
//! frequencies all fall inside the label's band, plus white noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fbm::{band_of, octave_radius, validate_thresholds};
use crate::numerics::{centered, Tensor};

/// Cosines per image.
pub const COMPONENTS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `1×S×S`.
    pub image: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandDataset {
    pub samples: Vec<Sample>,
    pub seed: u64,
    pub s: usize,
    pub thresholds: Vec<f64>,
    pub sigma: f64,
}

impl BandDataset {
    pub fn bands(&self) -> usize {
        self.thresholds.len() - 1
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples with index `i % 5 == 4` are held out (a fixed 80/20 split).
    pub fn is_held_out(index: usize) -> bool {
        index % 5 == 4
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !Self::is_held_out(i)).collect()
    }

    pub fn held_out_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| Self::is_held_out(i)).collect()
    }

    /// Samples at `indices`, as an owned dataset.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            samples: Vec::new(),
            seed: self.seed,
            s: self.s,
            thresholds: self.thresholds.clone(),
            sigma: self.sigma,
        }
    }
}

/// `amplitude · cos(2π(u·p + v·q)/S + phase)` on an `S×S` grid.
pub fn cosine_image(s: usize, u: i64, v: i64, amplitude: f64, phase: f64) -> Tensor {
    Tensor::from_fn(&[1, s, s], |i| {
        let (p, q) = ((i / s) as f64, (i % s) as f64);
        amplitude * (2.0 * PI * (u as f64 * p + v as f64 * q) / s as f64 + phase).cos()
    })
}

/// Centered frequency indices of an `S×S` grid grouped by band.
pub fn band_frequencies(s: usize, thresholds: &[f64]) -> Vec<Vec<(i64, i64)>> {
    let mut out = vec![Vec::new(); thresholds.len() - 1];
    for r in 0..s {
        for c in 0..s {
            out[band_of(octave_radius(r, c, s, s), thresholds)].push((centered(r, s), centered(c, s)));
        }
    }
    out
}

/// Labels are assigned round-robin, so every class gets `count / B` or one
/// more sample.
pub fn gen_band_dataset(seed: u64, count: usize, s: usize, thresholds: &[f64], sigma: f64) -> Result<BandDataset> {
    if s < 16 || !s.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "image side must be a power of two >= 16, got {s}"
        )));
    }
    validate_thresholds(thresholds)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise deviation must be >= 0, got {sigma}"
        )));
    }
    let freqs = band_frequencies(s, thresholds);
    if let Some(b) = freqs.iter().position(Vec::is_empty) {
        return Err(Error::InvalidArgument(format!(
            "band {b} holds no frequency on a {s}x{s} grid"
        )));
    }
    let bands = freqs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % bands;
        let mut image = Tensor::zeros(&[1, s, s]);
        for _ in 0..COMPONENTS {
            let (u, v) = freqs[label][rng.gen_range(0..freqs[label].len())];
            let amplitude = rng.gen_range(0.5..=1.0);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let wave = cosine_image(s, u, v, amplitude, phase);
            for (dst, w) in image.data_mut().iter_mut().zip(wave.data()) {
                *dst += w;
            }
        }
        if sigma > 0.0 {
            for v in image.data_mut() {
                *v += sigma * noise.sample(&mut rng);
            }
        }
        samples.push(Sample { image, label });
    }
    Ok(BandDataset {
        samples,
        seed,
        s,
        thresholds: thresholds.to_vec(),
        sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{band_filter, BandMaskSet, DEFAULT_THRESHOLDS};

    #[test]
    fn rejects_bad_sizes() {
        assert!(gen_band_dataset(0, 4, 24, &DEFAULT_THRESHOLDS, 0.0).is_err());
        assert!(gen_band_dataset(0, 4, 8, &DEFAULT_THRESHOLDS, 0.0).is_err());
        assert!(gen_band_dataset(0, 4, 16, &[0.0, 0.2], 0.0).is_err());
        // no 16x16 frequency lies in [1/64, 1/32)
        assert!(gen_band_dataset(0, 4, 16, &[0.0, 1.0 / 64.0, 1.0 / 32.0, 0.5], 0.0).is_err());
    }

    #[test]
    fn single_cosine_stays_in_its_band() {
        let s = 32;
        let masks = BandMaskSet::build(s, s, &DEFAULT_THRESHOLDS).unwrap();
        let freqs = band_frequencies(s, &DEFAULT_THRESHOLDS);
        for (label, list) in freqs.iter().enumerate() {
            for &(u, v) in list.iter().step_by(7) {
                let img = cosine_image(s, u, v, 0.8, 1.1);
                for b in 0..masks.bands() {
                    let part = band_filter(&img, masks.mask(b)).unwrap();
                    if b == label {
                        assert!(part.max_abs_diff(&img).unwrap() < 1e-10, "({u},{v}) band {b}");
                    } else {
                        assert!(part.max_abs() < 1e-10, "({u},{v}) leaks into band {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn labels_round_robin() {
        let d = gen_band_dataset(1, 10, 16, &DEFAULT_THRESHOLDS, 0.1).unwrap();
        let labels: Vec<usize> = d.samples.iter().map(|s| s.label).collect();
        assert_eq!(labels, vec![0, 1, 2, 3, 0, 1, 2, 3, 0, 1]);
    }

    #[test]
    fn split_is_eighty_twenty() {
        let d = gen_band_dataset(1, 20, 16, &DEFAULT_THRESHOLDS, 0.0).unwrap();
        assert_eq!(d.train_indices().len(), 16);
        assert_eq!(d.held_out_indices(), vec![4, 9, 14, 19]);
    }
}
