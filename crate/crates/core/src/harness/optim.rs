//! First-order optimizers over a flat list of tensors.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::config::OptimizerKind;

pub const MOMENTUM: f64 = 0.9;
pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    t: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &[&Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        let second = match kind {
            OptimizerKind::Adam => zeros.clone(),
            OptimizerKind::Sgd => Vec::new(),
        };
        Self {
            kind,
            lr,
            t: 0,
            first: zeros,
            second,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update in place. A zero learning rate leaves every
    /// parameter bitwise unchanged.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::shape(
                "optimizer step",
                format!(
                    "{} params and {} grads for {} slots",
                    params.len(),
                    grads.len(),
                    self.first.len()
                ),
            ));
        }
        self.t += 1;
        let t = self.t as i32;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            p.expect_same_shape(g, "optimizer step")?;
            p.expect_same_shape(&self.first[i], "optimizer step")?;
            let m = self.first[i].data_mut();
            match self.kind {
                OptimizerKind::Sgd => {
                    for ((pv, &gv), mv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()) {
                        *mv = MOMENTUM * *mv + gv;
                        if self.lr != 0.0 {
                            *pv -= self.lr * *mv;
                        }
                    }
                }
                OptimizerKind::Adam => {
                    let v = self.second[i].data_mut();
                    let c1 = 1.0 - BETA1.powi(t);
                    let c2 = 1.0 - BETA2.powi(t);
                    for (((pv, &gv), mv), vv) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.iter_mut())
                        .zip(v.iter_mut())
                    {
                        *mv = BETA1 * *mv + (1.0 - BETA1) * gv;
                        *vv = BETA2 * *vv + (1.0 - BETA2) * gv * gv;
                        if self.lr != 0.0 {
                            *pv -= self.lr * (*mv / c1) / ((*vv / c2).sqrt() + EPSILON);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
