//! SGD with classical momentum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::model::ModelParams;

/// Velocity buffer plus hyperparameters for momentum SGD.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    velocity: ModelParams,
    learning_rate: f64,
    momentum: f64,
}

/// Just the hyperparameters, for configs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
}

impl OptimizerState {
    /// Fresh state: all-zero velocity shaped like `model`.
    ///
    /// A zero learning rate is accepted as the degenerate frozen optimizer
    /// (every step is a no-op).
    pub fn new(model: &ModelParams, learning_rate: f64, momentum: f64) -> Result<Self> {
        if learning_rate < 0.0 || !learning_rate.is_finite() {
            return Err(Error::Validation(format!(
                "learning rate must be non-negative and finite, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Validation(format!(
                "momentum must be in [0, 1), got {momentum}"
            )));
        }
        Ok(Self {
            velocity: model.zeros_like(),
            learning_rate,
            momentum,
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn velocity(&self) -> &ModelParams {
        &self.velocity
    }
}

/// One momentum-SGD update: `v' = momentum·v + g`, `θ' = θ − η·v'`.
///
/// Pure in its inputs; returns the updated pair.
pub fn sgd_step(
    model: &ModelParams,
    grads: &ModelParams,
    opt: &OptimizerState,
) -> Result<(ModelParams, OptimizerState)> {
    let mut model = model.clone();
    let mut opt = opt.clone();
    sgd_step_in_place(&mut model, grads, &mut opt)?;
    Ok((model, opt))
}

/// In-place variant used by training loops; identical arithmetic.
pub fn sgd_step_in_place(
    model: &mut ModelParams,
    grads: &ModelParams,
    opt: &mut OptimizerState,
) -> Result<()> {
    model.check_same_spec(grads, "sgd_step grads")?;
    model.check_same_spec(&opt.velocity, "sgd_step velocity")?;
    let momentum = opt.momentum;
    let lr = opt.learning_rate;
    for ((layer, grad), vel) in model
        .layers_mut()
        .iter_mut()
        .zip(grads.layers())
        .zip(opt.velocity.layers_mut())
    {
        vel.weights.zip_mut_with(&grad.weights, |v, &g| *v = momentum * *v + g);
        vel.bias.zip_mut_with(&grad.bias, |v, &g| *v = momentum * *v + g);
        layer.weights.scaled_add(-lr, &vel.weights);
        layer.bias.scaled_add(-lr, &vel.bias);
    }
    Ok(())
}
