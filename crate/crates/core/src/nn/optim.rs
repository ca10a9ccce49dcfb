use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

/// How the learning rate falls once `decay_start_step` has passed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DecayRule {
    /// `lr = initial · 0.5^((step − start) / half_life)`
    Exponential { half_life: f64 },
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial_lr: f64,
    pub decay_start_step: u64,
    pub decay: DecayRule,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial_lr: 1e-3,
            decay_start_step: 5000,
            decay: DecayRule::Exponential { half_life: 25_000.0 },
        }
    }
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self { initial_lr: lr, decay_start_step: 0, decay: DecayRule::Constant }
    }

    pub fn with_initial_lr(mut self, lr: f64) -> Self {
        self.initial_lr = lr;
        self
    }

    /// Effective learning rate for the 1-based optimizer step `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if step <= self.decay_start_step {
            return self.initial_lr;
        }
        match self.decay {
            DecayRule::Constant => self.initial_lr,
            DecayRule::Exponential { half_life } => {
                let past = (step - self.decay_start_step) as f64;
                self.initial_lr * 0.5f64.powf(past / half_life)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    #[serde(skip)]
    m: Vec<Vec<f64>>,
    #[serde(skip)]
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }
}

/// One Adam update in place, at the learning rate `sched` gives for the
/// step being taken. Returns that learning rate.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    sched: &LrSchedule,
) -> Result<f64, NnError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NnError::Shape {
            op: "adam_step",
            detail: format!("{} params, {} grads, {} moments", params.len(), grads.len(), state.m.len()),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(NnError::Shape {
                op: "adam_step",
                detail: format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
            });
        }
    }
    state.step += 1;
    let lr = sched.lr_at(state.step);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let bias1 = 1.0 - b1.powi(state.step.min(i32::MAX as u64) as i32);
    let bias2 = 1.0 - b2.powi(state.step.min(i32::MAX as u64) as i32);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / bias1;
            let v_hat = *vi / bias2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(lr)
}
