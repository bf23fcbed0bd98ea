//! ADAM and the plateau learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::model::WeightSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: WeightSet,
    pub v: WeightSet,
    pub t: u64,
}

impl AdamState {
    /// Zero moments shaped like `weights`.
    pub fn new(config: AdamConfig, weights: &WeightSet) -> Self {
        let mut m = weights.clone();
        for (_, s) in m.slices_mut() {
            s.fill(0.0);
        }
        AdamState {
            config,
            v: m.clone(),
            m,
            t: 0,
        }
    }
}

/// One bias-corrected ADAM update.
pub fn adam_step(weights: &mut WeightSet, grads: &WeightSet, state: &mut AdamState) {
    state.t += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    let tensors = weights
        .slices_mut()
        .into_iter()
        .zip(grads.slices())
        .zip(state.m.slices_mut().into_iter().zip(state.v.slices_mut()));
    for (((_, w), (_, g)), ((_, m), (_, v))) in tensors {
        for i in 0..w.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleAction {
    Continue,
    Halve,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub best: Option<f64>,
    pub epochs_since_improvement: u32,
    pub halvings: u32,
    pub halve_after: u32,
    pub stop_after: u32,
}

impl Default for ScheduleState {
    fn default() -> Self {
        ScheduleState {
            best: None,
            epochs_since_improvement: 0,
            halvings: 0,
            halve_after: 3,
            stop_after: 6,
        }
    }
}

/// Records one validation loss. A strictly lower loss resets the counter;
/// otherwise the counter grows, halving `lr` when it reaches `halve_after`
/// and requesting a stop at `stop_after`. The counter is not reset by a
/// halving.
pub fn schedule_update(state: &mut ScheduleState, val_loss: f64, lr: &mut f64) -> ScheduleAction {
    let improved = match state.best {
        None => val_loss.is_finite(),
        Some(best) => val_loss < best,
    };
    if improved {
        state.best = Some(val_loss);
        state.epochs_since_improvement = 0;
        return ScheduleAction::Continue;
    }
    state.epochs_since_improvement += 1;
    if state.epochs_since_improvement >= state.stop_after {
        ScheduleAction::Stop
    } else if state.epochs_since_improvement == state.halve_after {
        *lr /= 2.0;
        state.halvings += 1;
        ScheduleAction::Halve
    } else {
        ScheduleAction::Continue
    }
}
