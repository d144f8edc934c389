//! Reverse-mode differentiation over the operations the layer needs.

mod check;
mod tape;

pub use check::{
    adjoint_dot_test, finite_diff_check, gradient_check, value_and_grad, value_of, FdReport, FnOperator,
    LinearOperator, LossBuilder, Sampling, TapeOperator,
};
pub use tape::{GradientMap, Op, Tape, Var};
