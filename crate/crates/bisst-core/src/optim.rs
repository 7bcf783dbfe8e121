//! Bias-corrected Adam with global-norm gradient clipping.

use alloc::collections::BTreeMap;
use alloc::string::String;

use crate::error::{CoreError, Result};
use crate::graph::GradMap;
use crate::tensor::{ParamStore, Tensor};

/// Optimizer hyperparameters. Defaults: lr 0.001, beta1 0.9, beta2 0.999,
/// epsilon 1e-8.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first/second-moment accumulators plus the shared step
/// counter. Moment tensors are allocated lazily on first use and always
/// match their parameter's shape.
#[derive(Default, Clone)]
pub struct AdamState {
    step: u64,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over every parameter in the store. Parameters without an
/// entry in `grads` are treated as having a zero gradient (their moments
/// still decay).
pub fn adam_step(
    params: &mut ParamStore,
    grads: &GradMap,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if cfg.learning_rate <= 0.0 {
        return Err(CoreError::Contract("learning rate must be positive".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bias2 = 1.0 - libm::pow(cfg.beta2, t as f64);

    for (name, p) in params.iter_mut() {
        if let Some(g) = grads.get(name) {
            if g.shape() != p.shape() {
                return Err(CoreError::InvalidShape(alloc::format!(
                    "gradient shape {:?} does not match parameter {name:?} {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
        }
        let m = state
            .first
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(p.shape()));
        let v = state
            .second
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(p.shape()));
        if m.shape() != p.shape() || v.shape() != p.shape() {
            return Err(CoreError::InvalidShape(alloc::format!(
                "Adam state shape mismatch for {name:?}"
            )));
        }
        let zero = 0.0;
        let gd = grads.get(name).map(|g| g.data());
        for i in 0..p.numel() {
            let g = gd.map_or(zero, |d| d[i]);
            let mi = &mut m.data_mut()[i];
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
            let m_hat = *mi / bias1;
            let vi = &mut v.data_mut()[i];
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
            let v_hat = *vi / bias2;
            p.data_mut()[i] -= cfg.learning_rate * m_hat / (libm::sqrt(v_hat) + cfg.epsilon);
        }
    }
    Ok(())
}

/// Scales all gradients so their joint L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut GradMap, max_norm: f64) -> f64 {
    let sq: f64 = grads
        .values()
        .flat_map(|t| t.data().iter().map(|v| v * v))
        .sum();
    let norm = libm::sqrt(sq);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for t in grads.values_mut() {
            for v in t.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(v: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::scalar(v));
        p
    }

    fn grad_of(v: f64) -> GradMap {
        let mut g = GradMap::new();
        g.insert("w".into(), Tensor::scalar(v));
        g
    }

    #[test]
    fn zero_gradient_leaves_fresh_params_unchanged() {
        let mut params = single_param(1.5);
        let mut state = AdamState::new();
        adam_step(&mut params, &grad_of(0.0), &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(params.expect("w").scalar_value(), 1.5);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_has_unit_bias_corrected_moments() {
        // With g = 1: m_hat = v_hat = 1, so the step is -lr / (1 + eps).
        let mut params = single_param(1.0);
        let mut state = AdamState::new();
        adam_step(&mut params, &grad_of(1.0), &mut state, &AdamConfig::default()).unwrap();
        let expected = 1.0 - 0.001 / (1.0 + 1e-8);
        assert!((params.expect("w").scalar_value() - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        // Hand-unrolled second step: m = 0.19, bias1 = 0.19, v = 0.001999,
        // bias2 = 0.001999, so m_hat = v_hat = 1 again.
        let mut params = single_param(1.0);
        let mut state = AdamState::new();
        let cfg = AdamConfig::default();
        adam_step(&mut params, &grad_of(1.0), &mut state, &cfg).unwrap();
        let p1 = params.expect("w").scalar_value();
        adam_step(&mut params, &grad_of(1.0), &mut state, &cfg).unwrap();
        let p2 = params.expect("w").scalar_value();
        assert!(p2 < p1 && p1 < 1.0);
        assert!((p2 - (1.0 - 2.0 * 0.001 / (1.0 + 1e-8))).abs() < 1e-12);
        assert_eq!(state.step_count(), 2);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = single_param(1.0);
        let mut bad = GradMap::new();
        bad.insert("w".into(), Tensor::zeros(&[2]));
        let err = adam_step(&mut params, &bad, &mut AdamState::new(), &AdamConfig::default());
        assert!(matches!(err, Err(CoreError::InvalidShape(_))));
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut grads = GradMap::new();
        grads.insert("a".into(), Tensor::from_vec(&[2], alloc::vec![3.0, 0.0]).unwrap());
        grads.insert("b".into(), Tensor::from_vec(&[1], alloc::vec![4.0]).unwrap());
        let norm = clip_global_norm(&mut grads, 5.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert_eq!(grads["a"].data(), &[3.0, 0.0]);

        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let clipped: f64 = grads
            .values()
            .flat_map(|t| t.data().iter().map(|v| v * v))
            .sum();
        assert!((libm::sqrt(clipped) - 1.0).abs() < 1e-12);
    }
}
