//! Dense arithmetic, the 2-D DFT pair and spatial/Fourier convolution.

mod conv;
mod fourier;
mod tensor;

pub(crate) use conv::{channel, conv2d_backward, pad_kernel};
pub use conv::{conv2d_direct, conv2d_fft, PadMode, WeightShape};
pub use fourier::{centered, dft2, dft2_complex, idft2, FourierIndex};
pub use tensor::{ComplexGrid, Tensor};
