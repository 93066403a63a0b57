use serde::{Deserialize, Serialize};

use super::ParameterSet;
use crate::error::{invalid, Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

impl Default for AdamConfig {
    /// The small-model learning rate of 1e-5; training configs override it.
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("Adam learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("Adam betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("Adam epsilon must be positive"));
        }
        Ok(())
    }
}

/// Moment estimates for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: ParameterSet,
    pub second_moment: ParameterSet,
}

impl AdamState {
    pub fn new(config: AdamConfig, like: &ParameterSet) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            first_moment: like.zeros_like(),
            second_moment: like.zeros_like(),
        })
    }

    /// In-place bias-corrected Adam update.
    pub fn apply(&mut self, params: &mut ParameterSet, grads: &ParameterSet) -> Result<()> {
        if !params.same_layout(grads) || !params.same_layout(&self.first_moment) {
            return Err(invalid("gradient layout does not match parameters"));
        }
        if !grads.is_finite() {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..params.num_blocks() {
            let g = grads.block(i).as_slice();
            let m = self.first_moment.block_mut(i).as_mut_slice();
            for (mj, gj) in m.iter_mut().zip(g) {
                *mj = beta1 * *mj + (1.0 - beta1) * gj;
            }
            let v = self.second_moment.block_mut(i).as_mut_slice();
            for (vj, gj) in v.iter_mut().zip(g) {
                *vj = beta2 * *vj + (1.0 - beta2) * gj * gj;
            }
            let m = self.first_moment.block(i).as_slice();
            let v = self.second_moment.block(i).as_slice();
            let p = params.block_mut(i).as_mut_slice();
            for ((pj, mj), vj) in p.iter_mut().zip(m).zip(v) {
                let m_hat = mj / bc1;
                let v_hat = vj / bc2;
                *pj -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Pure form of [`AdamState::apply`].
pub fn adam_step(
    params: &ParameterSet,
    grads: &ParameterSet,
    state: &AdamState,
) -> Result<(ParameterSet, AdamState)> {
    let mut p = params.clone();
    let mut s = state.clone();
    s.apply(&mut p, grads)?;
    Ok((p, s))
}
