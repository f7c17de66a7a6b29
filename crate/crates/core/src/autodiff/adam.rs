use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::AutodiffError;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update at 1-based `step`; returns the new parameters.
pub fn adam_step<T: Scalar>(
    params: &ParamSet<T>,
    grads: &ParamSet<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
    step: u64,
) -> Result<ParamSet<T>, AutodiffError> {
    assert!(step >= 1, "Adam steps are 1-based");
    // layout checks: all four sets must line up
    let mut next = params.clone();
    next.axpy(T::zero(), grads)?;
    next.axpy(T::zero(), &state.m)?;
    next.axpy(T::zero(), &state.v)?;

    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let bc1 = T::one() - T::of(cfg.beta1.powi(step as i32));
    let bc2 = T::one() - T::of(cfg.beta2.powi(step as i32));
    let (lr, eps) = (T::of(cfg.lr), T::of(cfg.eps));

    let moments = state.m.iter_mut().zip(state.v.iter_mut());
    for (((_, p), (_, g)), ((_, m), (_, v))) in next.iter_mut().zip(grads.iter()).zip(moments) {
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for (i, &gi) in g.data().iter().enumerate() {
            md[i] = b1 * md[i] + (T::one() - b1) * gi;
            vd[i] = b2 * vd[i] + (T::one() - b2) * gi * gi;
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            pd[i] = pd[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    state.step = step;
    Ok(next)
}
