use crate::numerics::{ParamSet, Tensor};

use super::{TrainConfig, TrainingError};

/// Adam moments for every parameter of a [`ParamSet`], in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub(crate) m: Vec<Tensor>,
    pub(crate) v: Vec<Tensor>,
    pub(crate) step: u64,
}

impl Adam {
    pub fn new(params: &ParamSet) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.value().shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.value().shape())).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// Clips the global gradient norm to `grad_clip_norm`, applies one
    /// bias-corrected Adam update, and zeroes the gradients. Returns the
    /// gradient norm before clipping.
    pub fn step(&mut self, params: &mut ParamSet, config: &TrainConfig) -> Result<f64, TrainingError> {
        if let Some(p) = params.iter().find(|p| !p.grad.is_finite()) {
            return Err(TrainingError::NonFiniteGradient(p.name.clone()));
        }
        let norm = params.grad_norm();
        let clip = if config.grad_clip_norm > 0.0 && norm > config.grad_clip_norm {
            config.grad_clip_norm / norm
        } else {
            1.0
        };
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (config.beta1, config.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grad = p.grad.data().to_vec();
            let value = p.value_mut().data_mut();
            for (((x, g), m), v) in value.iter_mut().zip(grad).zip(m.data_mut()).zip(v.data_mut()) {
                let g = g * clip;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *x -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
            }
            p.grad.data_mut().fill(0.0);
        }
        Ok(norm)
    }
}
