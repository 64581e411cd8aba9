//! Bias-corrected Adam over a flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        AdamState {
            config,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One update with step size `lr`. Parameters whose `mask` entry is `false`
/// are left alone.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    mask: Option<&[bool]>,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || mask.is_some_and(|m| m.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: grads.len(),
        });
    }
    if !(lr > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {lr}")));
    }
    let AdamConfig {
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for i in 0..n {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(AdamConfig::default(), 2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 1e-3, None).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε)
        for g in [0.5, -3.0] {
            let mut p = vec![0.0];
            let mut s = AdamState::new(AdamConfig::default(), 1);
            adam_step(&mut p, &[g], &mut s, 0.01, None).unwrap();
            assert!((p[0] + 0.01 * g.signum()).abs() < 1e-9);
        }
    }

    #[test]
    fn masked_entries_stay_put() {
        let mut p = vec![1.0, 1.0];
        let mut s = AdamState::new(AdamConfig::default(), 2);
        adam_step(&mut p, &[1.0, 1.0], &mut s, 0.1, Some(&[true, false])).unwrap();
        assert!(p[0] < 1.0);
        assert_eq!(p[1], 1.0);
    }

    #[test]
    fn state_round_trips() {
        let mut p = vec![0.3, 0.1, -0.2];
        let mut s = AdamState::new(AdamConfig::default(), 3);
        adam_step(&mut p, &[0.1, 1.0 / 3.0, -7.0], &mut s, 1e-3, None).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: AdamState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
