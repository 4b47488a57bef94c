use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state for one [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Tensor<T>>,
    pub second: Vec<Tensor<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = || params.values().iter().map(|v| Tensor::zeros(v.shape())).collect();
        OptimizerState {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn matches(&self, params: &ParamStore<T>) -> bool {
        self.first.len() == params.len()
            && self.second.len() == params.len()
            && params
                .values()
                .iter()
                .zip(self.first.iter().zip(&self.second))
                .all(|(p, (m, v))| p.shape() == m.shape() && p.shape() == v.shape())
    }
}

/// One bias-corrected adaptive-moment update from the gradient slots of
/// `params`. Gradients are checked for finiteness before anything changes.
pub fn opt_step<T: Real>(params: &mut ParamStore<T>, state: &mut OptimizerState<T>) -> Result<()> {
    if !state.matches(params) {
        return Err(Error::dim("optimizer moments do not match the parameters"));
    }
    if let Some(i) = (0..params.len()).find(|&i| !params.grad(i).all_finite()) {
        return Err(Error::Divergence {
            term: format!("gradient of `{}`", params.names()[i]),
            step: state.step,
        });
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for i in 0..params.len() {
        let (w, g) = params.value_and_grad_mut(i);
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        for j in 0..w.len() {
            let gj = g[j].as_f64();
            let mj = beta1 * m[j].as_f64() + (1.0 - beta1) * gj;
            let vj = beta2 * v[j].as_f64() + (1.0 - beta2) * gj * gj;
            m[j] = T::from_f64(mj);
            v[j] = T::from_f64(vj);
            let update = lr * (mj / c1) / ((vj / c2).sqrt() + eps);
            if update != 0.0 {
                w[j] = T::from_f64(w[j].as_f64() - update);
            }
        }
    }
    Ok(())
}
