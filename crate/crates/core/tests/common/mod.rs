//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use fdconv::Tensor;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| StandardNormal.sample(rng))
}

/// `X[u,v] = Σ_p Σ_q x[p,q]·e^{-2πi(up/M + vq/N)}`, summed term by term.
pub fn naive_dft(x: &[Complex64], m: usize, n: usize, inverse: bool) -> Vec<Complex64> {
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut out = vec![Complex64::new(0.0, 0.0); m * n];
    for u in 0..m {
        for v in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for p in 0..m {
                for q in 0..n {
                    let phase = sign * 2.0 * PI * ((u * p) as f64 / m as f64 + (v * q) as f64 / n as f64);
                    acc += x[p * n + q] * Complex64::from_polar(1.0, phase);
                }
            }
            out[u * n + v] = if inverse { acc / (m * n) as f64 } else { acc };
        }
    }
    out
}

pub fn naive_dft_real(x: &Tensor) -> Vec<Complex64> {
    let (m, n) = (x.shape()[0], x.shape()[1]);
    let c: Vec<Complex64> = x.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    naive_dft(&c, m, n, false)
}

/// `y[o,i,j] = Σ_{a,b,c} w[a,b,c,o]·x[c, i+a-r, j+b-r]`, indices wrapped
/// (`circular`) or out-of-range taps dropped.
pub fn naive_conv(x: &Tensor, w: &Tensor, circular: bool) -> Tensor {
    let (c_in, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (k, c_out) = (w.shape()[0], w.shape()[3]);
    let r = (k / 2) as isize;
    let at_w = |a: usize, b: usize, c: usize, o: usize| w.data()[((a * k + b) * c_in + c) * c_out + o];
    Tensor::from_fn(&[c_out, h, wd], |idx| {
        let (o, i, j) = (idx / (h * wd), idx / wd % h, idx % wd);
        let mut acc = 0.0;
        for a in 0..k {
            for b in 0..k {
                let (mut p, mut q) = (i as isize + a as isize - r, j as isize + b as isize - r);
                if circular {
                    p = p.rem_euclid(h as isize);
                    q = q.rem_euclid(wd as isize);
                } else if p < 0 || q < 0 || p >= h as isize || q >= wd as isize {
                    continue;
                }
                for c in 0..c_in {
                    acc += at_w(a, b, c, o) * x.data()[(c * h + p as usize) * wd + q as usize];
                }
            }
        }
        acc
    })
}

/// Centered coordinate of DFT storage index `i` on an axis of length `n`.
pub fn centered(i: usize, n: usize) -> i64 {
    if i < n.div_ceil(2) {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}
