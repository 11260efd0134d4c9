use serde::{Deserialize, Serialize};

use super::params::{Gradients, NetworkParams};
use crate::error::{LabError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for an ordered list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
}

/// One parameter tensor paired with its gradient for an optimizer update.
pub struct ParamSlot<'a> {
    pub name: String,
    pub value: &'a mut Tensor,
    pub grad: &'a Tensor,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[Vec<usize>]) -> Self {
        Self {
            config,
            t: 0,
            first: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            second: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn for_params(config: AdamConfig, params: &NetworkParams) -> Self {
        let shapes: Vec<Vec<usize>> = params
            .layers
            .iter()
            .flat_map(|l| [l.weight.shape().to_vec(), l.bias.shape().to_vec()])
            .collect();
        Self::new(config, &shapes)
    }

    /// Applies one update to every slot. Nothing is modified when any
    /// gradient is non-finite.
    pub fn apply(&mut self, slots: &mut [ParamSlot<'_>]) -> Result<()> {
        if slots.len() != self.first.len() {
            return Err(LabError::invalid(format!(
                "optimizer tracks {} tensors, got {}",
                self.first.len(),
                slots.len()
            )));
        }
        for (i, slot) in slots.iter().enumerate() {
            if slot.value.shape() != self.first[i].shape() || slot.grad.shape() != self.first[i].shape() {
                return Err(LabError::ShapeMismatch {
                    what: slot.name.clone(),
                    expected: self.first[i].shape().to_vec(),
                    got: slot.grad.shape().to_vec(),
                });
            }
            if !slot.grad.is_finite() {
                return Err(LabError::NonFiniteGradient(slot.name.clone()));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - (beta1 as f64).powf(self.t as f64);
        let c2 = 1.0 - (beta2 as f64).powf(self.t as f64);
        let (c1, c2) = (c1 as f32, c2 as f32);
        for (i, slot) in slots.iter_mut().enumerate() {
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let theta = slot.value.data_mut();
            for (((p, g), m), v) in theta.iter_mut().zip(slot.grad.data()).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

pub fn network_slots<'a>(params: &'a mut NetworkParams, grads: &'a Gradients) -> Vec<ParamSlot<'a>> {
    let mut slots = Vec::with_capacity(params.layers.len() * 2);
    for (layer, (gw, gb)) in params.layers.iter_mut().zip(&grads.layers) {
        slots.push(ParamSlot {
            name: format!("{}.weight", layer.name),
            value: &mut layer.weight,
            grad: gw,
        });
        slots.push(ParamSlot {
            name: format!("{}.bias", layer.name),
            value: &mut layer.bias,
            grad: gb,
        });
    }
    slots
}

/// One Adam update of a network's parameters.
pub fn adam_step(params: &mut NetworkParams, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let mut slots = network_slots(params, grads);
    state.apply(&mut slots)
}
