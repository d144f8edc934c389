mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::{centered, naive_conv, naive_dft_real, normal, rng, sigmoid};
use fdconv::autodiff::{adjoint_dot_test, Tape, TapeOperator};
use fdconv::fbm::{
    band_filter, decompose, fbm_forward, fbm_forward_postmod, predict_modulation, BandMaskSet, FbmParams,
    DEFAULT_THRESHOLDS,
};
use fdconv::ksm::{
    apply_modulation, channel_descriptor, fuse, global_branch, local_branch, modulation_matrix, GlobalLogits,
    KsmParams, DEFAULT_WINDOW,
};
use fdconv::{Tensor, WeightShape};

fn random_ksm(shape: WeightShape, seed: u64) -> KsmParams {
    let mut r = rng(seed);
    let mut p = KsmParams::init(shape, DEFAULT_WINDOW, &mut r);
    for t in [
        &mut p.local_weight,
        &mut p.local_bias,
        &mut p.fc1_bias,
        &mut p.fc2_weight,
        &mut p.fc2_bias,
    ] {
        *t = normal(t.shape(), &mut r);
    }
    p
}

#[test]
fn descriptor_matches_naive_mean() {
    let mut r = rng(20);
    let x = normal(&[3, 5, 7], &mut r);
    let d = channel_descriptor(&x).unwrap();
    for c in 0..3 {
        let mut acc = 0.0;
        for i in 0..35 {
            acc += x.data()[c * 35 + i];
        }
        assert!((d.data()[c] - acc / 35.0).abs() < 1e-14);
    }
}

#[test]
fn local_branch_matches_sliding_window() {
    let shape = WeightShape::new(3, 5, 2);
    let p = random_ksm(shape, 21);
    let d = normal(&[5], &mut rng(22));
    let l = local_branch(&d, &p, shape).unwrap();
    for a in 0..3 {
        for b in 0..3 {
            for o in 0..2 {
                let row = (a * 3 + b) * 2 + o;
                for c in 0..5 {
                    let mut acc = p.local_bias.data()[row];
                    for (t, src) in [c as i64 - 1, c as i64, c as i64 + 1].into_iter().enumerate() {
                        if (0..5).contains(&src) {
                            acc += p.local_weight.data()[row * 3 + t] * d.data()[src as usize];
                        }
                    }
                    let got = l.data()[((a * 3 + b) * 5 + c) * 2 + o];
                    assert!((got - acc).abs() < 1e-13);
                }
            }
        }
    }
}

#[test]
fn single_channel_local_branch_replicates_descriptor() {
    let shape = WeightShape::new(3, 1, 2);
    let mut p = KsmParams::init(shape, DEFAULT_WINDOW, &mut rng(23));
    for row in 0..18 {
        p.local_weight.data_mut()[row * 3 + 1] = 1.0;
    }
    let l = local_branch(&Tensor::new(&[1], vec![0.37]).unwrap(), &p, shape).unwrap();
    assert!(l.data().iter().all(|&v| v == 0.37));
}

#[test]
fn global_branch_by_hand() {
    // C_in = 1, hidden = 1, all weights 1, biases 0: every output is relu(d).
    let shape = WeightShape::new(3, 1, 2);
    let mut p = KsmParams::init(shape, DEFAULT_WINDOW, &mut rng(24));
    p.fc1_weight = Tensor::ones(&[1, 1]);
    p.fc2_weight = Tensor::ones(&[1, 12]);
    let g = global_branch(&Tensor::new(&[1], vec![0.7]).unwrap(), &p, shape).unwrap();
    assert_eq!(g.in_channel.data(), &[0.7]);
    assert_eq!(g.out_channel.data(), &[0.7, 0.7]);
    assert_eq!(g.spatial.data(), &[0.7; 9]);
    let g = global_branch(&Tensor::new(&[1], vec![-0.7]).unwrap(), &p, shape).unwrap();
    assert!(g.spatial.data().iter().all(|&v| v == 0.0));
}

#[test]
fn fuse_matches_scalar_recomputation() {
    let shape = WeightShape::new(3, 2, 4);
    let mut r = rng(25);
    let local = normal(&shape.dims(), &mut r);
    let g = GlobalLogits {
        in_channel: normal(&[2], &mut r),
        out_channel: normal(&[4], &mut r),
        spatial: normal(&[9], &mut r),
    };
    let alpha = fuse(&local, &g).unwrap();
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..2 {
                for o in 0..4 {
                    let off = ((a * 3 + b) * 2 + c) * 4 + o;
                    let z = local.data()[off]
                        + g.in_channel.data()[c]
                        + g.out_channel.data()[o]
                        + g.spatial.data()[a * 3 + b];
                    assert!((alpha.data()[off] - 2.0 * sigmoid(z)).abs() < 1e-14);
                }
            }
        }
    }
}

#[test]
fn perturbing_one_output_logit_touches_one_slice() {
    let shape = WeightShape::new(3, 2, 4);
    let mut r = rng(26);
    let local = normal(&shape.dims(), &mut r);
    let mut g = GlobalLogits {
        in_channel: normal(&[2], &mut r),
        out_channel: normal(&[4], &mut r),
        spatial: normal(&[9], &mut r),
    };
    let before = fuse(&local, &g).unwrap();
    g.out_channel.data_mut()[2] += 0.5;
    let after = fuse(&local, &g).unwrap();
    for (i, (x, y)) in before.data().iter().zip(after.data()).enumerate() {
        if i % 4 == 2 {
            assert_ne!(x, y);
        } else {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn modulation_is_elementwise() {
    let mut r = rng(27);
    let w = normal(&[3, 3, 2, 2], &mut r);
    let a = normal(&[3, 3, 2, 2], &mut r);
    let m = apply_modulation(&w, &a).unwrap();
    for i in 0..w.len() {
        assert!((m.data()[i] - w.data()[i] * a.data()[i]).abs() < 1e-14);
    }
    assert!(apply_modulation(&w, &Tensor::ones(&[3, 3, 2, 1])).is_err());
}

#[test]
fn alpha_stays_inside_open_interval() {
    let shape = WeightShape::new(3, 3, 3);
    let p = random_ksm(shape, 28);
    let x = normal(&[3, 6, 6], &mut rng(29)).scale(5.0);
    let alpha = modulation_matrix(&x, &p, shape).unwrap();
    assert!(alpha.data().iter().all(|&a| a > 0.0 && a < 2.0));
}

#[test]
fn octave_thresholds_give_four_bands() {
    assert_eq!(DEFAULT_THRESHOLDS, [0.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0]);
    assert_eq!(BandMaskSet::build(32, 32, &DEFAULT_THRESHOLDS).unwrap().bands(), 4);
}

#[test]
fn eight_by_eight_band_split() {
    let masks = BandMaskSet::build(8, 8, &[0.0, 0.25, 0.5]).unwrap();
    let mut low = 0;
    for r in 0..8 {
        for c in 0..8 {
            let f = (centered(r, 8).abs().max(centered(c, 8).abs())) as f64 / 8.0;
            let expected = if f < 0.25 { 0 } else { 1 };
            low += usize::from(expected == 0);
            assert_eq!(masks.mask(expected).data()[r * 8 + c], 1.0);
            assert_eq!(masks.mask(1 - expected).data()[r * 8 + c], 0.0);
        }
    }
    assert_eq!(low, 9);
}

#[test]
fn cosine_lands_in_its_band() {
    let x = Tensor::from_fn(&[1, 16, 16], |i| (2.0 * PI * 2.0 * (i / 16) as f64 / 16.0).cos());
    let masks = BandMaskSet::build(16, 16, &DEFAULT_THRESHOLDS).unwrap();
    // f = 2/16 = 1/8 falls in [1/8, 1/4)
    for b in 0..4 {
        let part = band_filter(&x, masks.mask(b)).unwrap();
        if b == 2 {
            assert!(part.max_abs_diff(&x).unwrap() < 1e-10);
        } else {
            assert!(part.max_abs() < 1e-10, "band {b}");
        }
    }
}

#[test]
fn band_filter_matches_spectral_oracle() {
    let mut r = rng(30);
    let x = normal(&[1, 8, 8], &mut r);
    let masks = BandMaskSet::build(8, 8, &[0.0, 0.25, 0.5]).unwrap();
    let spectrum = naive_dft_real(&x.reshape(&[8, 8]).unwrap());
    let kept: Vec<_> = spectrum.iter().zip(masks.mask(1).data()).map(|(z, &m)| z * m).collect();
    let back = common::naive_dft(&kept, 8, 8, true);
    let got = band_filter(&x, masks.mask(1)).unwrap();
    for (a, b) in got.data().iter().zip(&back) {
        assert!((a - b.re).abs() < 1e-12 && b.im.abs() < 1e-12);
    }
}

#[test]
fn band_filter_is_self_adjoint() {
    let masks = BandMaskSet::build(12, 10, &DEFAULT_THRESHOLDS).unwrap();
    for b in 0..masks.bands() {
        let m = Arc::new(masks.mask(b).clone());
        let op = TapeOperator::new(&[2, 12, 10], move |t: &mut Tape, x| t.band_filter(x, Arc::clone(&m))).unwrap();
        assert!(adjoint_dot_test(&op, 4, b as u64).unwrap() < 1e-10);
    }
}

#[test]
fn predictor_matches_conv_sigmoid_oracle() {
    let mut r = rng(31);
    let x = normal(&[2, 9, 7], &mut r);
    let mut p = FbmParams::zeros(2, 4);
    p.weight = normal(p.weight.shape(), &mut r);
    p.bias = normal(p.bias.shape(), &mut r);
    let a = predict_modulation(&x, &p).unwrap();
    let logits = naive_conv(&x, &p.weight, false);
    let plane = 63;
    assert!(a.data()[..plane].iter().all(|&v| v == 1.0));
    for o in 0..3 {
        for i in 0..plane {
            let expected = sigmoid(logits.data()[o * plane + i] + p.bias.data()[o]);
            assert!((a.data()[(o + 1) * plane + i] - expected).abs() < 1e-13);
        }
    }
}

#[test]
fn constant_modulation_is_linear_in_bands() {
    let mut r = rng(32);
    let x = normal(&[2, 16, 16], &mut r);
    let w = normal(&[3, 3, 2, 3], &mut r);
    let masks = BandMaskSet::build(16, 16, &DEFAULT_THRESHOLDS).unwrap();
    let c = [1.0, 0.3, 0.8, 0.1];
    let a = Tensor::from_fn(&[4, 16, 16], |i| c[i / 256]);
    let mut expected = Tensor::zeros(&[3, 16, 16]);
    for (b, xb) in decompose(&x, &masks).unwrap().iter().enumerate() {
        expected = expected.add(&naive_conv(xb, &w, true).scale(c[b])).unwrap();
    }
    let pre = fbm_forward(&x, &w, &a, &masks).unwrap();
    let post = fbm_forward_postmod(&x, &w, &a, &masks).unwrap();
    assert!(pre.max_abs_diff(&expected).unwrap() < 1e-10);
    assert!(post.max_abs_diff(&expected).unwrap() < 1e-10);
}

#[test]
fn varying_modulation_separates_the_paths() {
    let mut r = rng(33);
    let x = normal(&[1, 16, 16], &mut r);
    let w = normal(&[3, 3, 1, 2], &mut r);
    let masks = BandMaskSet::build(16, 16, &DEFAULT_THRESHOLDS).unwrap();
    let a = Tensor::from_fn(&[4, 16, 16], |i| 0.5 + 0.5 * ((i * 37 % 101) as f64 / 101.0));
    let gap = fbm_forward(&x, &w, &a, &masks)
        .unwrap()
        .max_abs_diff(&fbm_forward_postmod(&x, &w, &a, &masks).unwrap())
        .unwrap();
    assert!(gap > 1e-3, "gap {gap}");
}
