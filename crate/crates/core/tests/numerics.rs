mod common;

use common::{naive_conv, naive_dft, naive_dft_real, normal, rng};
use fdconv::autodiff::{adjoint_dot_test, gradient_check, FnOperator, Sampling, Tape, TapeOperator};
use fdconv::numerics::{conv2d_direct, conv2d_fft, dft2, dft2_complex, idft2};
use fdconv::{ComplexGrid, PadMode, Tensor};
use num_complex::Complex64;

#[test]
fn dft_matches_double_sum_on_4x4() {
    let mut r = rng(1);
    let x = normal(&[4, 4], &mut r);
    let fast = dft2(&x).unwrap();
    let slow = naive_dft_real(&x);
    for (a, b) in fast.data().iter().zip(&slow) {
        assert!((a - b).norm() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn dft_matches_double_sum_on_odd_complex_grid() {
    let mut r = rng(2);
    let re = normal(&[5, 7], &mut r);
    let im = normal(&[5, 7], &mut r);
    let data: Vec<Complex64> = re
        .data()
        .iter()
        .zip(im.data())
        .map(|(&a, &b)| Complex64::new(a, b))
        .collect();
    let grid = ComplexGrid::new(5, 7, data.clone()).unwrap();
    for (a, b) in dft2_complex(&grid)
        .unwrap()
        .data()
        .iter()
        .zip(naive_dft(&data, 5, 7, false))
    {
        assert!((a - b).norm() < 1e-12);
    }
    for (a, b) in idft2(&grid).unwrap().data().iter().zip(naive_dft(&data, 5, 7, true)) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn hermitian_input_has_real_inverse() {
    let (m, n) = (6, 5);
    let mut r = rng(3);
    let re = normal(&[m, n], &mut r);
    let im = normal(&[m, n], &mut r);
    let mut grid = ComplexGrid::zeros(m, n);
    // fill a half-plane, mirror it by conjugation
    for p in 0..m {
        for q in 0..n {
            let (cp, cq) = ((m - p) % m, (n - q) % n);
            if (p, q) <= (cp, cq) {
                let z = if (p, q) == (cp, cq) {
                    Complex64::new(re.data()[p * n + q], 0.0)
                } else {
                    Complex64::new(re.data()[p * n + q], im.data()[p * n + q])
                };
                grid.set(p, q, z);
                grid.set(cp, cq, z.conj());
            }
        }
    }
    assert!(idft2(&grid).unwrap().max_imag() < 1e-12);
    assert!(dft2_complex(&grid).unwrap().max_imag() < 1e-12);
}

#[test]
fn direct_convolution_matches_nested_loops() {
    let mut r = rng(4);
    let x = normal(&[1, 6, 6], &mut r);
    let w = normal(&[3, 3, 1, 1], &mut r);
    for (mode, circular) in [(PadMode::Zero, false), (PadMode::Circular, true)] {
        let gap = conv2d_direct(&x, &w, mode)
            .unwrap()
            .max_abs_diff(&naive_conv(&x, &w, circular))
            .unwrap();
        assert!(gap < 1e-12, "{mode:?}: {gap}");
    }
}

#[test]
fn multichannel_convolution_matches_nested_loops() {
    let mut r = rng(5);
    let x = normal(&[3, 7, 9], &mut r);
    let w = normal(&[5, 5, 3, 2], &mut r);
    for (mode, circular) in [(PadMode::Zero, false), (PadMode::Circular, true)] {
        let gap = conv2d_direct(&x, &w, mode)
            .unwrap()
            .max_abs_diff(&naive_conv(&x, &w, circular))
            .unwrap();
        assert!(gap < 1e-12);
    }
}

#[test]
fn fourier_convolution_matches_direct() {
    let mut r = rng(6);
    let x = normal(&[1, 8, 8], &mut r);
    let w = normal(&[3, 3, 1, 1], &mut r);
    let gap = conv2d_fft(&x, &w)
        .unwrap()
        .max_abs_diff(&conv2d_direct(&x, &w, PadMode::Circular).unwrap())
        .unwrap();
    assert!(gap < 1e-10);
}

/// Kernel equivalent to correlating with `w1` and then `w2`:
/// `W[A,B,c,o] = Σ_{a+a'=A, b+b'=B} Σ_m w1[a,b,c,m]·w2[a',b',m,o]`.
fn compose(w1: &Tensor, w2: &Tensor) -> Tensor {
    let (k1, ci, cm) = (w1.shape()[0], w1.shape()[2], w1.shape()[3]);
    let (k2, co) = (w2.shape()[0], w2.shape()[3]);
    let k = k1 + k2 - 1;
    let mut out = Tensor::zeros(&[k, k, ci, co]);
    let d = out.data_mut();
    for a in 0..k1 {
        for b in 0..k1 {
            for a2 in 0..k2 {
                for b2 in 0..k2 {
                    for c in 0..ci {
                        for m in 0..cm {
                            for o in 0..co {
                                let (aa, bb) = (a + a2, b + b2);
                                d[((aa * k + bb) * ci + c) * co + o] += w1.data()[((a * k1 + b) * ci + c) * cm + m]
                                    * w2.data()[((a2 * k2 + b2) * cm + m) * co + o];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[test]
fn stacked_kernels_compose() {
    let mut r = rng(7);
    let x = normal(&[2, 10, 9], &mut r);
    let w1 = normal(&[3, 3, 2, 3], &mut r);
    let w2 = normal(&[3, 3, 3, 2], &mut r);
    let stacked = conv2d_fft(&conv2d_fft(&x, &w1).unwrap(), &w2).unwrap();
    let single = conv2d_fft(&x, &compose(&w1, &w2)).unwrap();
    assert!(stacked.max_abs_diff(&single).unwrap() < 1e-9);
}

#[test]
fn conv_gradients_match_finite_differences() {
    let mut r = rng(8);
    let x = normal(&[2, 6, 5], &mut r);
    let w = normal(&[3, 3, 2, 2], &mut r);
    let probe = normal(&[2, 6, 5], &mut r);
    for mode in [PadMode::Zero, PadMode::Circular] {
        let build = |t: &mut Tape, v: &[fdconv::autodiff::Var]| {
            let y = t.conv2d(v[0], v[1], mode)?;
            let p = t.constant(probe.clone());
            let yp = t.mul(y, p)?;
            t.sum(yp)
        };
        let report = gradient_check(&build, &[x.clone(), w.clone()], 1e-5, Sampling::All).unwrap();
        assert!(report.max_rel_error < 1e-5, "{mode:?}: {report:?}");
    }
}

#[test]
fn sigmoid_sum_gradient() {
    let mut r = rng(9);
    let theta = normal(&[10], &mut r);
    let build = |t: &mut Tape, v: &[fdconv::autodiff::Var]| {
        let s = t.sigmoid(v[0])?;
        t.sum(s)
    };
    let report = gradient_check(&build, &[theta], 1e-5, Sampling::All).unwrap();
    assert!(report.max_rel_error < 1e-7, "{report:?}");
}

#[test]
fn backprop_is_deterministic() {
    let mut r = rng(10);
    let x = normal(&[2, 6, 6], &mut r);
    let w = normal(&[3, 3, 2, 3], &mut r);
    let grads = || {
        let mut t = Tape::new();
        let (xv, wv) = (t.param(x.clone()), t.param(w.clone()));
        let y = t.conv2d(xv, wv, PadMode::Circular).unwrap();
        let y = t.sigmoid(y).unwrap();
        let l = t.sum(y).unwrap();
        let g = t.grad(l).unwrap();
        (g.expect(xv).unwrap().clone(), g.expect(wv).unwrap().clone())
    };
    let (a, b) = (grads(), grads());
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.0), bits(&b.0));
    assert_eq!(bits(&a.1), bits(&b.1));
}

#[test]
fn linear_tape_ops_are_adjoint() {
    let reshape = TapeOperator::new(&[3, 4, 5], |t: &mut Tape, x| t.reshape(x, &[12, 5])).unwrap();
    assert!(adjoint_dot_test(&reshape, 5, 1).unwrap() < 1e-10);
    let pool = TapeOperator::new(&[3, 4, 5], |t: &mut Tape, x| t.global_avg_pool(x)).unwrap();
    assert!(adjoint_dot_test(&pool, 5, 2).unwrap() < 1e-10);
    let dft = FnOperator {
        input: vec![6, 4],
        output: vec![6, 4],
        forward: |x: &Tensor| Ok(dft2(x)?.real()),
        backward: |y: &Tensor| Ok(dft2(y)?.real()),
    };
    assert!(adjoint_dot_test(&dft, 5, 3).unwrap() < 1e-10);
}
