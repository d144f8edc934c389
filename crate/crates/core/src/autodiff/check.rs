//! Finite-difference and adjoint verification.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Which parameter entries a finite-difference check perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    All,
    /// `count` distinct entries drawn uniformly over the concatenated
    /// parameters (all of them when there are fewer).
    Random {
        count: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// `(tensor, element)` with the largest error.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

/// Compares `analytic` against central differences of `f`. The error of one
/// entry is `|a - c| / max(1, |a|, |c|)`.
pub fn finite_diff_check<F>(
    mut f: F,
    theta: &[Tensor],
    analytic: &[Tensor],
    eps: f64,
    sampling: Sampling,
) -> Result<FdReport>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {eps:e} outside [1e-7, 1e-3]"
        )));
    }
    if theta.len() != analytic.len() || theta.iter().zip(analytic).any(|(t, a)| t.shape() != a.shape()) {
        return Err(Error::shape(
            "finite_diff_check",
            "analytic gradients must mirror the parameter shapes",
        ));
    }
    let sizes: Vec<usize> = theta.iter().map(Tensor::len).collect();
    let total: usize = sizes.iter().sum();
    let flat: Vec<usize> = match sampling {
        Sampling::All => (0..total).collect(),
        Sampling::Random { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = sample(&mut rng, total, count.min(total)).into_vec();
            picked.sort_unstable();
            picked
        }
    };
    let locate = |mut i: usize| {
        for (t, &len) in sizes.iter().enumerate() {
            if i < len {
                return (t, i);
            }
            i -= len;
        }
        unreachable!("flat index within total")
    };

    let mut params = theta.to_vec();
    let mut report = FdReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for &global in &flat {
        let (t, e) = locate(global);
        let original = params[t].data()[e];
        params[t].data_mut()[e] = original + eps;
        let plus = f(&params)?;
        params[t].data_mut()[e] = original - eps;
        let minus = f(&params)?;
        params[t].data_mut()[e] = original;
        let central = (plus - minus) / (2.0 * eps);
        let a = analytic[t].data()[e];
        if !plus.is_finite() || !minus.is_finite() || !a.is_finite() {
            return Err(Error::NonFinite {
                context: "finite difference (index is over the concatenated parameters)",
                index: global,
            });
        }
        let err = (a - central).abs() / 1f64.max(a.abs()).max(central.abs());
        if report.worst.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some((t, e));
        }
        report.checked += 1;
    }
    Ok(report)
}

/// Builds a scalar loss on a fresh tape from registered parameters.
pub trait LossBuilder: Fn(&mut Tape, &[Var]) -> Result<Var> {}
impl<T: Fn(&mut Tape, &[Var]) -> Result<Var>> LossBuilder for T {}

/// Loss value and tape gradients for `theta`.
pub fn value_and_grad(build: &impl LossBuilder, theta: &[Tensor]) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = theta.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.grad(loss)?;
    let value = tape.value(loss).data()[0];
    let g = vars
        .iter()
        .map(|&v| grads.expect(v).cloned())
        .collect::<Result<Vec<_>>>()?;
    Ok((value, g))
}

/// Loss value only.
pub fn value_of(build: &impl LossBuilder, theta: &[Tensor]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = theta.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    Ok(tape.value(loss).data()[0])
}

/// Tape gradients checked against central differences of the same builder.
pub fn gradient_check(build: &impl LossBuilder, theta: &[Tensor], eps: f64, sampling: Sampling) -> Result<FdReport> {
    let (_, analytic) = value_and_grad(build, theta)?;
    finite_diff_check(|p| value_of(build, p), theta, &analytic, eps, sampling)
}

/// A linear map with a declared adjoint.
pub trait LinearOperator {
    fn input_shape(&self) -> Vec<usize>;
    fn output_shape(&self) -> Vec<usize>;
    fn apply(&self, x: &Tensor) -> Result<Tensor>;
    fn adjoint(&self, y: &Tensor) -> Result<Tensor>;
}

/// Largest `|⟨Ax, y⟩ − ⟨x, Aᵀy⟩|` over `trials` standard-normal pairs, each
/// divided by `max(‖Ax‖·‖y‖, ‖x‖·‖Aᵀy‖)`.
pub fn adjoint_dot_test(op: &dyn LinearOperator, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidArgument(
            "adjoint dot test needs at least one trial".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let x = Tensor::from_fn(&op.input_shape(), |_| StandardNormal.sample(&mut rng));
        let y = Tensor::from_fn(&op.output_shape(), |_| StandardNormal.sample(&mut rng));
        let ax = op.apply(&x)?;
        let aty = op.adjoint(&y)?;
        let lhs = ax.dot(&y)?;
        let rhs = x.dot(&aty)?;
        let scale = (ax.norm() * y.norm()).max(x.norm() * aty.norm());
        let gap = (lhs - rhs).abs();
        worst = worst.max(if scale > 0.0 { gap / scale } else { gap });
    }
    Ok(worst)
}

/// Wraps a single-input tape computation as a [`LinearOperator`] whose
/// adjoint is the tape's backward pass.
pub struct TapeOperator<F> {
    input: Vec<usize>,
    output: Vec<usize>,
    build: F,
}

impl<F> TapeOperator<F>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    pub fn new(input: &[usize], build: F) -> Result<Self> {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros(input));
        let y = build(&mut tape, x)?;
        let output = tape.value(y).shape().to_vec();
        Ok(Self {
            input: input.to_vec(),
            output,
            build,
        })
    }
}

impl<F> LinearOperator for TapeOperator<F>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    fn input_shape(&self) -> Vec<usize> {
        self.input.clone()
    }

    fn output_shape(&self) -> Vec<usize> {
        self.output.clone()
    }

    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xv = tape.param(x.clone());
        let y = (self.build)(&mut tape, xv)?;
        Ok(tape.value(y).clone())
    }

    fn adjoint(&self, y: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xv = tape.param(Tensor::zeros(&self.input));
        let out = (self.build)(&mut tape, xv)?;
        Ok(tape.backprop(out, y)?.expect(xv)?.clone())
    }
}

/// Linear operator from a pair of closures.
pub struct FnOperator<A, B> {
    pub input: Vec<usize>,
    pub output: Vec<usize>,
    pub forward: A,
    pub backward: B,
}

impl<A, B> LinearOperator for FnOperator<A, B>
where
    A: Fn(&Tensor) -> Result<Tensor>,
    B: Fn(&Tensor) -> Result<Tensor>,
{
    fn input_shape(&self) -> Vec<usize> {
        self.input.clone()
    }

    fn output_shape(&self) -> Vec<usize> {
        self.output.clone()
    }

    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        (self.forward)(x)
    }

    fn adjoint(&self, y: &Tensor) -> Result<Tensor> {
        (self.backward)(y)
    }
}
