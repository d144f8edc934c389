//! Frequency dynamic convolution on plain `f64` arrays.
//!
//! The layer mixes `n` spatial weights materialized from disjoint groups of
//! Fourier coefficients that share one `k²·C_in·C_out` parameter budget,
//! modulates the mixture element by element, and rescales disjoint frequency
//! bands of the input per spatial location before a single convolution.
//!
//! Module map:
//! - [`numerics`]: tensors, the 2-D DFT pair, direct and Fourier convolution.
//! - [`autodiff`]: a reverse-mode tape with finite-difference and adjoint checks.
//! - [`fdw`]: Fourier-disjoint weight construction.
//! - [`ksm`]: kernel spatial modulation.
//! - [`fbm`]: frequency band modulation.
//! - [`layer`]: the composed layer, baselines and parameter accounting.
//! - [`analysis`]: frequency responses, cosine similarity, CSV export.
//! - [`harness`]: config files, synthetic data, training, checkpoints.
//! - [`checks`]: the invariant suites behind `fdconv check`.

pub mod analysis;
pub mod autodiff;
pub mod checks;
pub mod error;
pub mod fbm;
pub mod fdw;
pub mod harness;
pub mod ksm;
pub mod layer;
pub mod numerics;

pub use error::{Error, Result};
pub use numerics::{ComplexGrid, FourierIndex, PadMode, Tensor, WeightShape};
