use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("AdamW betas must lie in [0, 1)"));
        }
        if self.eps <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::invalid(
                "AdamW eps must be positive and weight decay non-negative",
            ));
        }
        Ok(())
    }
}

/// Moment estimates for one group of tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (m, v) = shapes
            .into_iter()
            .map(|(r, c)| (Matrix::zeros(r, c), Matrix::zeros(r, c)))
            .unzip();
        OptimizerState {
            config,
            step: 0,
            m,
            v,
        }
    }

    pub fn for_tensors<'a>(
        config: AdamWConfig,
        tensors: impl IntoIterator<Item = &'a Matrix>,
    ) -> Self {
        Self::new(config, tensors.into_iter().map(Matrix::shape))
    }
}

/// One AdamW update with decoupled weight decay. Every gradient is checked
/// before any parameter is touched.
pub fn adamw_step(
    params: &mut [(&'static str, &mut Matrix)],
    grads: &[(&'static str, &Matrix)],
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "{} parameters, {} gradients, {} optimizer slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (((name, p), (_, g)), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Shape(format!(
                "{name}: parameter {:?}, gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::invalid(format!(
            "learning rate {lr} is not a finite non-negative number"
        )));
    }

    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let decay = 1.0 - lr * c.weight_decay;
    for (((_, p), (_, g)), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let ps = p.as_mut_slice();
        let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
        for (k, &gk) in g.as_slice().iter().enumerate() {
            ms[k] = c.beta1 * ms[k] + (1.0 - c.beta1) * gk;
            vs[k] = c.beta2 * vs[k] + (1.0 - c.beta2) * gk * gk;
            let update = (ms[k] / bc1) / ((vs[k] / bc2).sqrt() + c.eps);
            ps[k] = ps[k] * decay - lr * update;
        }
    }
    Ok(())
}
