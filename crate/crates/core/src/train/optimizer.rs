use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nm::{to_half, Half};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f32,
    #[serde(default)]
    pub momentum: f32,
    #[serde(default)]
    pub weight_decay: f32,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.weight_decay.is_finite()
            && self.weight_decay >= 0.0;
        if !ok {
            return Err(Error::Config(format!(
                "invalid optimizer settings {self:?}"
            )));
        }
        Ok(())
    }
}

/// binary32 master weights and momentum buffers, one flat tensor per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: SgdConfig,
    /// Gradients arrive multiplied by this factor and are divided back here.
    pub loss_scale: f32,
    master: Vec<Vec<f32>>,
    velocity: Vec<Vec<f32>>,
    step: u64,
}

impl OptimizerState {
    pub fn new(config: SgdConfig, loss_scale: f32, master: Vec<Vec<f32>>) -> Self {
        let velocity = master.iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            config,
            loss_scale,
            master,
            velocity,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn master(&self) -> &[Vec<f32>] {
        &self.master
    }

    pub(crate) fn master_mut(&mut self) -> &mut [Vec<f32>] {
        &mut self.master
    }

    pub fn velocity(&self) -> &[Vec<f32>] {
        &self.velocity
    }

    /// binary16 copy of every master tensor, for the next iteration's compute.
    pub fn half_weights(&self) -> Vec<Vec<Half>> {
        self.master
            .iter()
            .map(|t| t.iter().map(|&w| to_half(w)).collect())
            .collect()
    }
}

/// One momentum-SGD update from (scaled) gradients.
///
/// `grads[i]` matches `state.master()[i]`. On the mixed-precision path every
/// gradient value is already a promoted binary16.
pub fn sgd_momentum_step(state: &mut OptimizerState, grads: &[Vec<f32>]) -> Result<()> {
    if grads.len() != state.master.len() {
        return Err(Error::shape(format!(
            "{} gradient tensors for {} parameters",
            grads.len(),
            state.master.len()
        )));
    }
    let SgdConfig {
        lr,
        momentum,
        weight_decay,
    } = state.config;
    let inv_scale = 1.0 / state.loss_scale;
    for (t, ((w, v), g)) in state
        .master
        .iter_mut()
        .zip(state.velocity.iter_mut())
        .zip(grads)
        .enumerate()
    {
        if g.len() != w.len() {
            return Err(Error::shape(format!(
                "gradient tensor {t}: {} values for {}",
                g.len(),
                w.len()
            )));
        }
        for ((wi, vi), &gi) in w.iter_mut().zip(v.iter_mut()).zip(g) {
            let g32 = gi * inv_scale + weight_decay * *wi;
            *vi = momentum * *vi + g32;
            *wi -= lr * *vi;
        }
        if let Some(pos) = w.iter().position(|x| !x.is_finite()) {
            return Err(Error::Divergence {
                step: state.step,
                detail: format!("non-finite weight in tensor {t} at {pos}"),
            });
        }
    }
    state.step += 1;
    Ok(())
}
