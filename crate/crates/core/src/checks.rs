//! Invariant suites run by `fdconv check`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::analysis::{pairwise_cosine_similarity, spectral_overlap, weight_frequency_response, SpectrumGrid};
use crate::autodiff::{
    adjoint_dot_test, finite_diff_check, FdReport, FnOperator, LinearOperator, Sampling, Tape, TapeOperator,
};
use crate::error::Result;
use crate::fbm::{band_filter, decompose, fbm_forward, fbm_forward_postmod, BandMaskSet, DEFAULT_THRESHOLDS};
use crate::fdw::{FdwBasis, SpectralBank};
use crate::ksm::{modulation_matrix, KsmParams, DEFAULT_WINDOW};
use crate::layer::{fdconv_forward, param_count, FdConvConfig, LayerGraph, LayerState};
use crate::numerics::{conv2d_direct, conv2d_fft, dft2, idft2, PadMode, Tensor, WeightShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Numerics,
    Fdw,
    Ksm,
    Fbm,
    Grad,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "all" => Suite::All,
            "numerics" => Suite::Numerics,
            "fdw" => Suite::Fdw,
            "ksm" => Suite::Ksm,
            "fbm" => Suite::Fbm,
            "grad" => Suite::Grad,
            other => return Err(format!("unknown suite {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}/{}: {}", self.suite, self.name, self.detail)
    }
}

fn normal(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| StandardNormal.sample(rng))
}

/// `(passed, detail)` for a measured value against a strict bound.
fn below(value: f64, bound: f64) -> (bool, String) {
    (value < bound, format!("{value:.3e} < {bound:.0e}"))
}

fn run(suite: &'static str, name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        suite,
        name,
        passed,
        detail,
    }
}

/// Worst direct-vs-Fourier circular convolution gap over random instances
/// with `C ≤ 4`, extent `≤ 16`, `k ∈ {1, 3, 5}`.
pub fn conv_theorem_gap(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let (h, w) = (rng.gen_range(k..=16), rng.gen_range(k..=16));
        let (c_in, c_out) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let x = normal(&[c_in, h, w], &mut rng);
        let wt = normal(&[k, k, c_in, c_out], &mut rng);
        let gap = conv2d_direct(&x, &wt, PadMode::Circular)?.max_abs_diff(&conv2d_fft(&x, &wt)?)?;
        worst = worst.max(gap);
    }
    Ok(worst)
}

/// Largest off-diagonal cosine similarity of `n` weights from a random bank.
pub fn fdw_similarity(shape: WeightShape, n: usize, seed: u64) -> Result<f64> {
    let basis = FdwBasis::new(shape, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bank = SpectralBank::new(basis.table(), normal(&[basis.table().param_count()], &mut rng))?;
    Ok(pairwise_cosine_similarity(&basis.materialize(&bank)?)?.max_off_diagonal())
}

/// Largest pointwise product of native-grid magnitude spectra over weight
/// pairs from a random bank.
pub fn fdw_spectral_overlap(shape: WeightShape, n: usize, seed: u64) -> Result<f64> {
    let basis = FdwBasis::new(shape, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bank = SpectralBank::new(basis.table(), normal(&[basis.table().param_count()], &mut rng))?;
    let report = weight_frequency_response(&basis.materialize(&bank)?, SpectrumGrid::Native)?;
    Ok(spectral_overlap(&report)?.0)
}

/// Layer state with every tensor drawn at random so no gradient path is
/// blocked by a zero-initialized stage.
pub fn randomized_state(config: &FdConvConfig, scale: f64, seed: u64) -> Result<LayerState> {
    let mut state = LayerState::init(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in state.tensors_mut() {
        for v in t.data_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = scale * z;
        }
    }
    Ok(state)
}

fn projected_layer_loss(state: &LayerState, x: &Tensor, probe: &Tensor) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let mut graph = LayerGraph::new(&mut tape, state)?;
    let xv = tape.constant(x.clone());
    let y = graph.forward(&mut tape, xv)?;
    let p = tape.constant(probe.clone());
    let prod = tape.mul(y, p)?;
    let loss = tape.sum(prod)?;
    let grads = tape.grad(loss)?;
    let g = graph
        .vars()
        .vars
        .iter()
        .map(|&v| grads.expect(v).cloned())
        .collect::<Result<Vec<_>>>()?;
    Ok((tape.value(loss).data()[0], g))
}

/// Central-difference check of the full layer, loss `⟨layer(x), R⟩` for a
/// fixed random probe `R`, on `count` sampled parameter entries.
pub fn layer_gradient_check(config: &FdConvConfig, extent: usize, count: usize, seed: u64) -> Result<FdReport> {
    let state = randomized_state(config, 0.3, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
    let x = normal(&[config.c_in, extent, extent], &mut rng);
    let probe = normal(&[config.c_out, extent, extent], &mut rng);
    let (_, analytic) = projected_layer_loss(&state, &x, &probe)?;
    let theta: Vec<Tensor> = state.named_tensors().iter().map(|(_, t)| (*t).clone()).collect();
    let mut trial = state.clone();
    finite_diff_check(
        |params| {
            for (dst, src) in trial.tensors_mut().into_iter().zip(params) {
                *dst = src.clone();
            }
            let y = fdconv_forward(&x, &trial)?;
            y.dot(&probe)
        },
        &theta,
        &analytic,
        1e-6,
        Sampling::Random { count, seed },
    )
}

/// Adjoint dot-test residue of every linear tape operation and of the FDW
/// synthesis/analysis pair.
pub fn adjoint_residues(seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, h, w) = (2, 8, 6);
    let shape = WeightShape::new(3, c, 3);
    let kernel = normal(&shape.dims(), &mut rng);
    let image = normal(&[c, h, w], &mut rng);
    let other = normal(&[c, h, w], &mut rng);
    let mat = normal(&[4, 5], &mut rng);
    let masks = BandMaskSet::build(h, w, &[0.0, 0.2, 0.5])?;
    let mask = Arc::new(masks.mask(1).clone());
    let basis = Arc::new(FdwBasis::new(shape, 4)?);
    let conv1d_w = normal(&[9 * 3, DEFAULT_WINDOW], &mut rng);
    let conv1d_b = Tensor::zeros(&[9 * 3]);
    let trials = 4;

    let mut out = Vec::new();
    let mut push = |name: &'static str, op: &dyn LinearOperator| -> Result<()> {
        out.push((name, adjoint_dot_test(op, trials, seed)?));
        Ok(())
    };
    for (name, mode) in [
        ("conv2d input (zero)", PadMode::Zero),
        ("conv2d input (circular)", PadMode::Circular),
    ] {
        let k = kernel.clone();
        push(
            name,
            &TapeOperator::new(&[c, h, w], move |t: &mut Tape, x| {
                let kv = t.constant(k.clone());
                t.conv2d(x, kv, mode)
            })?,
        )?;
    }
    let x0 = image.clone();
    push(
        "conv2d weight",
        &TapeOperator::new(&shape.dims(), move |t: &mut Tape, wv| {
            let xv = t.constant(x0.clone());
            t.conv2d(xv, wv, PadMode::Circular)
        })?,
    )?;
    let m = Arc::clone(&mask);
    push(
        "band filter",
        &TapeOperator::new(&[c, h, w], move |t: &mut Tape, x| t.band_filter(x, Arc::clone(&m)))?,
    )?;
    let b = Arc::clone(&basis);
    push(
        "fdw materialize",
        &TapeOperator::new(&[basis.table().param_count()], move |t: &mut Tape, v| {
            t.fdw_materialize(v, Arc::clone(&b))
        })?,
    )?;
    let mm = mat.clone();
    push(
        "matmul",
        &TapeOperator::new(&[3, 4], move |t: &mut Tape, x| {
            let mv = t.constant(mm.clone());
            t.matmul(x, mv)
        })?,
    )?;
    let o = other.clone();
    push(
        "elementwise mul",
        &TapeOperator::new(&[c, h, w], move |t: &mut Tape, x| {
            let ov = t.constant(o.clone());
            t.mul(x, ov)
        })?,
    )?;
    push(
        "scale",
        &TapeOperator::new(&[c, h, w], |t: &mut Tape, x| t.scale(x, -1.75))?,
    )?;
    push(
        "add",
        &TapeOperator::new(&[c, h, w], |t: &mut Tape, x| {
            let y = t.scale(x, 2.0)?;
            t.add(x, y)
        })?,
    )?;
    push(
        "global average pool",
        &TapeOperator::new(&[c, h, w], |t: &mut Tape, x| t.global_avg_pool(x))?,
    )?;
    push(
        "reshape",
        &TapeOperator::new(&[c, h, w], |t: &mut Tape, x| t.reshape(x, &[c * h, w]))?,
    )?;
    push(
        "expand",
        &TapeOperator::new(&[3], |t: &mut Tape, x| t.expand(x, &[2, 3, 4], &[1]))?,
    )?;
    push(
        "slice",
        &TapeOperator::new(&[c, h, w], |t: &mut Tape, x| t.slice(x, 5, &[3, 4]))?,
    )?;
    push("sum", &TapeOperator::new(&[c, h, w], |t: &mut Tape, x| t.sum(x))?)?;
    push(
        "channel conv1d",
        &TapeOperator::new(&[c], move |t: &mut Tape, d| {
            let wv = t.constant(conv1d_w.clone());
            let bv = t.constant(conv1d_b.clone());
            t.channel_conv1d(d, wv, bv, shape)
        })?,
    )?;
    let b2 = Arc::clone(&basis);
    let b3 = Arc::clone(&basis);
    push(
        "fdw group analysis",
        &FnOperator {
            input: vec![basis.table().param_count()],
            output: shape.dims().to_vec(),
            forward: move |p: &Tensor| b2.materialize_group(p, 1),
            backward: move |g: &Tensor| b3.scatter_group(&b3.adjoint_group(g, 1)?, 1),
        },
    )?;
    let (rows, cols) = (7, 5);
    push(
        "dft pair",
        &FnOperator {
            input: vec![rows, cols],
            output: vec![rows, cols],
            forward: |x: &Tensor| Ok(dft2(x)?.real()),
            backward: move |y: &Tensor| {
                Ok(idft2(&crate::numerics::ComplexGrid::from_real(y)?)?
                    .real()
                    .scale((rows * cols) as f64))
            },
        },
    )?;
    Ok(out)
}

fn numerics_checks() -> Vec<CheckResult> {
    vec![
        run("numerics", "dft round trip", || {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let x = normal(&[12, 10], &mut rng);
            let back = idft2(&dft2(&x)?)?.real();
            Ok(below(back.max_abs_diff(&x)?, 1e-12))
        }),
        run("numerics", "parseval", || {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let x = normal(&[9, 16], &mut rng);
            let spectral: f64 = dft2(&x)?.data().iter().map(|z| z.norm_sqr()).sum::<f64>() / 144.0;
            let spatial = x.dot(&x)?;
            Ok(below((spectral - spatial).abs() / spatial, 1e-12))
        }),
        run("numerics", "convolution theorem", || {
            Ok(below(conv_theorem_gap(50, 3)?, 1e-10))
        }),
    ]
}

fn fdw_checks() -> Vec<CheckResult> {
    let shape = WeightShape::new(3, 16, 16);
    vec![
        run("fdw", "orthogonality", || {
            let mut worst: f64 = 0.0;
            for n in [2, 4, 16, 64] {
                worst = worst.max(fdw_similarity(shape, n, n as u64)?);
            }
            Ok(below(worst, 1e-8))
        }),
        run("fdw", "spectral disjointness", || {
            let mut worst: f64 = 0.0;
            for n in [2, 4, 16] {
                worst = worst.max(fdw_spectral_overlap(WeightShape::new(3, 4, 4), n, n as u64)?);
            }
            Ok(below(worst, 1e-12))
        }),
        run("fdw", "budget invariance", || {
            let budget = shape.len();
            let bad: Vec<usize> = (1..=64)
                .filter(|&n| {
                    let cfg = FdConvConfig {
                        n,
                        ..FdConvConfig::default()
                    };
                    param_count(&cfg).map(|p| p.bank).ok() != Some(budget)
                })
                .collect();
            Ok((
                bad.is_empty(),
                format!("bank = {budget} for n in 1..=64, mismatches at {bad:?}"),
            ))
        }),
        run("fdw", "full reconstruction", || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let basis = FdwBasis::new(WeightShape::new(3, 2, 3), 4)?;
            let w = normal(&[3, 3, 2, 3], &mut rng);
            let bank = SpectralBank::from_spatial(basis.table(), &w)?;
            let sum = basis
                .materialize(&bank)?
                .iter()
                .try_fold(Tensor::zeros(w.shape()), |acc, wi| acc.add(wi))?;
            Ok(below(sum.max_abs_diff(&w)?, 1e-12))
        }),
    ]
}

fn ksm_checks() -> Vec<CheckResult> {
    let shape = WeightShape::new(3, 4, 5);
    vec![
        run("ksm", "zero heads give identity", || {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let params = KsmParams::init(shape, DEFAULT_WINDOW, &mut rng);
            let alpha = modulation_matrix(&normal(&[4, 8, 8], &mut rng), &params, shape)?;
            Ok(below(alpha.map(|a| a - 1.0).max_abs(), 1e-12))
        }),
        run("ksm", "range (0, 2)", || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut params = KsmParams::init(shape, DEFAULT_WINDOW, &mut rng);
            params.local_weight = normal(params.local_weight.shape(), &mut rng);
            params.fc2_weight = normal(params.fc2_weight.shape(), &mut rng);
            let alpha = modulation_matrix(&normal(&[4, 8, 8], &mut rng), &params, shape)?;
            let ok = alpha.data().iter().all(|&a| a > 0.0 && a < 2.0);
            Ok((ok, format!("{} entries in (0, 2)", alpha.len())))
        }),
        run("ksm", "degenerate collapse", || {
            let config = FdConvConfig {
                k: 3,
                c_in: 3,
                c_out: 2,
                n: 1,
                enable_ksm: false,
                enable_fbm: false,
                ..FdConvConfig::default()
            };
            let state = LayerState::init(&config)?;
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let x = normal(&[3, 10, 9], &mut rng);
            let plain = conv2d_direct(&x, &state.weights()?[0], PadMode::Circular)?;
            Ok(below(fdconv_forward(&x, &state)?.max_abs_diff(&plain)?, 1e-10))
        }),
    ]
}

fn fbm_checks() -> Vec<CheckResult> {
    vec![
        run("fbm", "mask partition", || {
            let mut ok = true;
            for s in [16, 32] {
                let masks = BandMaskSet::build(s, s, &DEFAULT_THRESHOLDS)?;
                let total = masks.masks().iter().try_fold(Tensor::zeros(&[s, s]), |a, m| a.add(m))?;
                ok &= total.data().iter().all(|&v| v == 1.0);
            }
            Ok((ok, "mask sum is exactly 1 at extents 16 and 32".into()))
        }),
        run("fbm", "band reconstruction and energy", || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut worst: f64 = 0.0;
            for s in [16, 32] {
                let masks = BandMaskSet::build(s, s, &DEFAULT_THRESHOLDS)?;
                let x = normal(&[2, s, s], &mut rng);
                let parts = decompose(&x, &masks)?;
                let sum = parts.iter().try_fold(Tensor::zeros(x.shape()), |a, p| a.add(p))?;
                worst = worst.max(sum.max_abs_diff(&x)?);
                let energy: f64 = parts.iter().map(|p| p.dot(p)).sum::<Result<f64>>()?;
                worst = worst.max((energy - x.dot(&x)?).abs() / x.dot(&x)?);
            }
            Ok(below(worst, 1e-10))
        }),
        run("fbm", "idempotence", || {
            let mut rng = ChaCha8Rng::seed_from_u64(10);
            let masks = BandMaskSet::build(16, 16, &DEFAULT_THRESHOLDS)?;
            let x = normal(&[1, 16, 16], &mut rng);
            let once = band_filter(&x, masks.mask(2))?;
            Ok(below(band_filter(&once, masks.mask(2))?.max_abs_diff(&once)?, 1e-12))
        }),
        run("fbm", "constant modulation paths agree", || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let masks = BandMaskSet::build(16, 16, &DEFAULT_THRESHOLDS)?;
            let x = normal(&[2, 16, 16], &mut rng);
            let w = normal(&[3, 3, 2, 3], &mut rng);
            let levels: Vec<f64> = (0..masks.bands()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let a = Tensor::from_fn(&[masks.bands(), 16, 16], |i| levels[i / 256]);
            let gap = fbm_forward(&x, &w, &a, &masks)?.max_abs_diff(&fbm_forward_postmod(&x, &w, &a, &masks)?)?;
            Ok(below(gap, 1e-10))
        }),
        run("fbm", "varying modulation gap (informational)", || {
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let masks = BandMaskSet::build(16, 16, &DEFAULT_THRESHOLDS)?;
            let x = normal(&[2, 16, 16], &mut rng);
            let w = normal(&[3, 3, 2, 3], &mut rng);
            let a = Tensor::from_fn(&[masks.bands(), 16, 16], |_| rng.gen_range(0.0..1.0));
            let gap = fbm_forward(&x, &w, &a, &masks)?.max_abs_diff(&fbm_forward_postmod(&x, &w, &a, &masks)?)?;
            Ok((true, format!("max gap {gap:.3e}")))
        }),
    ]
}

fn grad_checks() -> Vec<CheckResult> {
    vec![
        run("grad", "full layer finite differences", || {
            let config = FdConvConfig {
                k: 3,
                c_in: 2,
                c_out: 3,
                n: 4,
                ..FdConvConfig::default()
            };
            let report = layer_gradient_check(&config, 8, 200, 13)?;
            let (ok, detail) = below(report.max_rel_error, 1e-4);
            Ok((ok, format!("{detail} over {} entries", report.checked)))
        }),
        run("grad", "adjoint dot tests", || {
            let residues = adjoint_residues(14)?;
            let worst = residues.iter().fold(0.0f64, |m, (_, r)| m.max(*r));
            let (ok, detail) = below(worst, 1e-10);
            Ok((ok, format!("{detail} over {} operators", residues.len())))
        }),
    ]
}

pub fn run_suite(suite: Suite) -> Vec<CheckResult> {
    match suite {
        Suite::Numerics => numerics_checks(),
        Suite::Fdw => fdw_checks(),
        Suite::Ksm => ksm_checks(),
        Suite::Fbm => fbm_checks(),
        Suite::Grad => grad_checks(),
        Suite::All => [Suite::Numerics, Suite::Fdw, Suite::Ksm, Suite::Fbm, Suite::Grad]
            .into_iter()
            .flat_map(run_suite)
            .collect(),
    }
}
