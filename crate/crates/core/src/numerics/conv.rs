//! Stride-1, same-size 2-D cross-correlation.
//!
//! Features are `C×H×W`; weights are `k×k×C_in×C_out` with element
//! `w[a, b, c, o]` at flat offset `((a·k + b)·C_in + c)·C_out + o`.

use num_complex::Complex64;

use super::fourier::{dft2, idft2};
use super::tensor::{ComplexGrid, Tensor};
use crate::error::{Error, Result};

/// Boundary handling for spatial convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    /// Zero padding of `⌊k/2⌋` on every side.
    Zero,
    /// Periodic wrap-around.
    Circular,
}

/// Extents of a `k×k×C_in×C_out` weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightShape {
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl WeightShape {
    pub fn new(k: usize, c_in: usize, c_out: usize) -> Self {
        Self { k, c_in, c_out }
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.k, self.k, self.c_in, self.c_out]
    }

    pub fn len(&self) -> usize {
        self.k * self.k * self.c_in * self.c_out
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offset(&self, a: usize, b: usize, c: usize, o: usize) -> usize {
        ((a * self.k + b) * self.c_in + c) * self.c_out + o
    }

    /// Reads the shape of a rank-4 weight with square spatial extent.
    pub fn of(w: &Tensor) -> Result<Self> {
        w.expect_rank(4, "weight")?;
        let s = w.shape();
        if s[0] != s[1] {
            return Err(Error::shape("weight", format!("non-square kernel {s:?}")));
        }
        Ok(Self::new(s[0], s[2], s[3]))
    }
}

pub(crate) struct ConvGeometry {
    pub shape: WeightShape,
    pub h: usize,
    pub w: usize,
}

pub(crate) fn conv_geometry(x: &Tensor, w: &Tensor) -> Result<ConvGeometry> {
    x.expect_rank(3, "conv2d input")?;
    let shape = WeightShape::of(w)?;
    let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if shape.k % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "kernel extent must be odd, got {}",
            shape.k
        )));
    }
    if shape.k > h || shape.k > wd {
        return Err(Error::InvalidArgument(format!(
            "kernel extent {} exceeds feature extent {h}x{wd}",
            shape.k
        )));
    }
    if shape.c_in != c {
        return Err(Error::shape(
            "conv2d",
            format!("input has {c} channels, weight {:?} expects {}", w.shape(), shape.c_in),
        ));
    }
    Ok(ConvGeometry { shape, h, w: wd })
}

/// Source coordinate for output `i` and kernel tap `a`, or `None` when it
/// falls in the zero padding.
#[inline]
fn source(i: usize, a: usize, radius: usize, n: usize, mode: PadMode) -> Option<usize> {
    let pos = i as isize + a as isize - radius as isize;
    match mode {
        PadMode::Circular => Some(pos.rem_euclid(n as isize) as usize),
        PadMode::Zero => (pos >= 0 && (pos as usize) < n).then_some(pos as usize),
    }
}

/// Direct nested-loop cross-correlation, `C_in×H×W → C_out×H×W`.
pub fn conv2d_direct(x: &Tensor, w: &Tensor, mode: PadMode) -> Result<Tensor> {
    let g = conv_geometry(x, w)?;
    let s = g.shape;
    let r = s.k / 2;
    let (h, wd) = (g.h, g.w);
    let xd = x.data();
    let wdata = w.data();
    let mut out = vec![0.0; s.c_out * h * wd];
    for a in 0..s.k {
        for b in 0..s.k {
            for c in 0..s.c_in {
                let plane = &xd[c * h * wd..(c + 1) * h * wd];
                for o in 0..s.c_out {
                    let weight = wdata[s.offset(a, b, c, o)];
                    if weight == 0.0 {
                        continue;
                    }
                    let dst = &mut out[o * h * wd..(o + 1) * h * wd];
                    for i in 0..h {
                        let Some(si) = source(i, a, r, h, mode) else { continue };
                        for j in 0..wd {
                            if let Some(sj) = source(j, b, r, wd, mode) {
                                dst[i * wd + j] += weight * plane[si * wd + sj];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![s.c_out, h, wd], out))
}

/// Gradients of `⟨g, conv2d_direct(x, w)⟩` with respect to `x` and `w`.
pub(crate) fn conv2d_backward(x: &Tensor, w: &Tensor, grad: &Tensor, mode: PadMode) -> Result<(Tensor, Tensor)> {
    let g = conv_geometry(x, w)?;
    let s = g.shape;
    let r = s.k / 2;
    let (h, wd) = (g.h, g.w);
    let xd = x.data();
    let wdata = w.data();
    let gd = grad.data();
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    for a in 0..s.k {
        for b in 0..s.k {
            for c in 0..s.c_in {
                for o in 0..s.c_out {
                    let off = s.offset(a, b, c, o);
                    let weight = wdata[off];
                    let gplane = &gd[o * h * wd..(o + 1) * h * wd];
                    let mut acc = 0.0;
                    for i in 0..h {
                        let Some(si) = source(i, a, r, h, mode) else { continue };
                        for j in 0..wd {
                            if let Some(sj) = source(j, b, r, wd, mode) {
                                let src = c * h * wd + si * wd + sj;
                                let gy = gplane[i * wd + j];
                                acc += gy * xd[src];
                                gx[src] += gy * weight;
                            }
                        }
                    }
                    gw[off] += acc;
                }
            }
        }
    }
    Ok((
        Tensor::from_parts(x.shape().to_vec(), gx),
        Tensor::from_parts(w.shape().to_vec(), gw),
    ))
}

/// Places a `k×k` kernel slice on an `h×w` grid so that tap `(a, b)` sits at
/// offset `(a - ⌊k/2⌋, b - ⌊k/2⌋)` modulo the grid.
pub(crate) fn pad_kernel(w: &Tensor, s: WeightShape, c: usize, o: usize, h: usize, wd: usize) -> Tensor {
    let r = s.k / 2;
    let mut grid = vec![0.0; h * wd];
    for a in 0..s.k {
        for b in 0..s.k {
            let i = (a as isize - r as isize).rem_euclid(h as isize) as usize;
            let j = (b as isize - r as isize).rem_euclid(wd as isize) as usize;
            grid[i * wd + j] += w.data()[s.offset(a, b, c, o)];
        }
    }
    Tensor::from_parts(vec![h, wd], grid)
}

pub(crate) fn channel(x: &Tensor, c: usize) -> Tensor {
    let (h, w) = (x.shape()[1], x.shape()[2]);
    Tensor::from_parts(vec![h, w], x.data()[c * h * w..(c + 1) * h * w].to_vec())
}

/// Circular cross-correlation through the convolution theorem:
/// `y_o = Σ_c iDFT(conj(DFT(w_pad[c,o])) ⊙ DFT(x_c))`.
pub fn conv2d_fft(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    let g = conv_geometry(x, w)?;
    let s = g.shape;
    let (h, wd) = (g.h, g.w);
    let x_spectra = (0..s.c_in).map(|c| dft2(&channel(x, c))).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(s.c_out * h * wd);
    for o in 0..s.c_out {
        let mut acc = ComplexGrid::zeros(h, wd);
        for (c, xs) in x_spectra.iter().enumerate() {
            let ws = dft2(&pad_kernel(w, s, c, o, h, wd))?;
            for ((dst, &xv), &wv) in acc.data_mut().iter_mut().zip(xs.data()).zip(ws.data()) {
                *dst += wv.conj() * xv;
            }
        }
        let spatial = idft2(&acc)?;
        out.extend(spatial.data().iter().map(|c: &Complex64| c.re));
    }
    Ok(Tensor::from_parts(vec![s.c_out, h, wd], out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_kernel(k: usize) -> Tensor {
        let mut w = Tensor::zeros(&[k, k, 1, 1]);
        w.data_mut()[(k / 2) * k + k / 2] = 1.0;
        w
    }

    fn ramp(shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |i| ((i * 37 % 11) as f64 - 5.0) / 3.0)
    }

    #[test]
    fn identity_kernel_both_modes() {
        let x = ramp(&[1, 5, 6]);
        for mode in [PadMode::Zero, PadMode::Circular] {
            let y = conv2d_direct(&x, &identity_kernel(3), mode).unwrap();
            assert_eq!(y, x);
        }
        let y = conv2d_fft(&x, &identity_kernel(3)).unwrap();
        assert!(y.max_abs_diff(&x).unwrap() < 1e-12);
    }

    #[test]
    fn box_filter_counts_neighbours() {
        let x = Tensor::ones(&[1, 5, 5]);
        let w = Tensor::ones(&[3, 3, 1, 1]);
        let y = conv2d_direct(&x, &w, PadMode::Circular).unwrap();
        assert!(y.data().iter().all(|&v| v == 9.0));
        let y = conv2d_direct(&x, &w, PadMode::Zero).unwrap();
        assert_eq!(y.data()[0], 4.0);
        assert_eq!(y.data()[2], 6.0);
        assert_eq!(y.data()[12], 9.0);
    }

    #[test]
    fn rejects_bad_kernels() {
        let x = Tensor::ones(&[1, 4, 4]);
        let even = Tensor::ones(&[2, 2, 1, 1]);
        assert!(matches!(
            conv2d_direct(&x, &even, PadMode::Zero),
            Err(Error::InvalidArgument(_))
        ));
        let big = Tensor::ones(&[5, 5, 1, 1]);
        assert!(conv2d_direct(&x, &big, PadMode::Circular).is_err());
        assert!(conv2d_fft(&x, &big).is_err());
        let wrong_channels = Tensor::ones(&[3, 3, 2, 1]);
        assert!(matches!(
            conv2d_direct(&x, &wrong_channels, PadMode::Zero),
            Err(Error::Shape { .. })
        ));
    }
}
