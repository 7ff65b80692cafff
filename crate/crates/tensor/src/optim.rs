use crate::error::{Result, TensorError};
use crate::params::NamedParameterSet;

/// AdamW state: bias-corrected first/second moments per parameter plus the
/// hyperparameters. Weight decay is decoupled: it scales the weights
/// directly instead of being folded into the gradient.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    moments: Vec<Moments>,
    names: Vec<String>,
}

#[derive(Debug, Clone)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
}

impl OptimizerState {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Result<Self> {
        Self::with_betas(learning_rate, weight_decay, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(learning_rate: f64, weight_decay: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if learning_rate < 0.0 || weight_decay < 0.0 {
            return Err(TensorError::ParamMismatch(format!(
                "learning rate {} / weight decay {} must be non-negative",
                learning_rate, weight_decay
            )));
        }
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
            return Err(TensorError::ParamMismatch(format!(
                "betas ({}, {}) must lie in (0,1) and eps {} must be positive",
                beta1, beta2, eps
            )));
        }
        Ok(OptimizerState {
            learning_rate,
            weight_decay,
            beta1,
            beta2,
            eps,
            step_count: 0,
            moments: Vec::new(),
            names: Vec::new(),
        })
    }
}

/// One AdamW update:
/// `m = b1 m + (1-b1) g`, `v = b2 v + (1-b2) g^2`, moments bias-corrected,
/// then `theta = theta (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)`.
pub fn adamw_step(params: &mut NamedParameterSet, grads: &NamedParameterSet, state: &mut OptimizerState) -> Result<()> {
    params.check_aligned(grads, "gradients")?;
    if state.moments.is_empty() {
        state.names = params.names().map(str::to_owned).collect();
        state.moments = params
            .iter()
            .map(|(_, t)| Moments { first: vec![0.0; t.numel()], second: vec![0.0; t.numel()] })
            .collect();
    } else {
        let names: Vec<&str> = params.names().collect();
        if names.len() != state.names.len() || names.iter().zip(&state.names).any(|(a, b)| *a != b) {
            return Err(TensorError::ParamMismatch(
                "optimizer state was initialized for a different parameter set".to_string(),
            ));
        }
        for ((_, t), m) in params.iter().zip(&state.moments) {
            if t.numel() != m.first.len() {
                return Err(TensorError::ParamMismatch(
                    "optimizer state moment shape does not match parameter".to_string(),
                ));
            }
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let lr = state.learning_rate;
    let decay = 1.0 - lr * state.weight_decay;

    for (((_, theta), (_, grad)), m) in params.iter_mut().zip(grads.iter()).zip(state.moments.iter_mut()) {
        let g = grad.data();
        let td = theta.data_mut();
        for i in 0..td.len() {
            m.first[i] = state.beta1 * m.first[i] + (1.0 - state.beta1) * g[i];
            m.second[i] = state.beta2 * m.second[i] + (1.0 - state.beta2) * g[i] * g[i];
            let m_hat = m.first[i] / bc1;
            let v_hat = m.second[i] / bc2;
            td[i] = td[i] * decay - lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn single(value: f64) -> NamedParameterSet {
        let mut p = NamedParameterSet::new();
        p.insert("w", Tensor::new(vec![1], vec![value]).unwrap()).unwrap();
        p
    }

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut params = single(0.7);
        let grads = single(0.0);
        let mut st = OptimizerState::new(0.1, 0.0).unwrap();
        adamw_step(&mut params, &grads, &mut st).unwrap();
        assert_eq!(params.get("w").unwrap().data()[0], 0.7);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_bias_correction_gives_lr_sized_move() {
        // g=1, lr=0.1: m_hat = v_hat = 1, so the step is -lr/(1+eps)
        let mut params = single(0.0);
        let grads = single(1.0);
        let mut st = OptimizerState::new(0.1, 0.0).unwrap();
        adamw_step(&mut params, &grads, &mut st).unwrap();
        let w = params.get("w").unwrap().data()[0];
        assert!((w + 0.1).abs() < 1e-8, "got {}", w);
    }

    #[test]
    fn decoupled_decay_scales_weights() {
        let mut params = single(2.0);
        let grads = single(0.0);
        let mut st = OptimizerState::new(0.1, 0.05).unwrap();
        adamw_step(&mut params, &grads, &mut st).unwrap();
        let w = params.get("w").unwrap().data()[0];
        assert!((w - 2.0 * (1.0 - 0.1 * 0.05)).abs() < 1e-15, "got {}", w);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut params = single(1.25);
        let grads = single(3.0);
        let mut st = OptimizerState::new(0.0, 0.05).unwrap();
        for _ in 0..3 {
            adamw_step(&mut params, &grads, &mut st).unwrap();
        }
        assert_eq!(params.get("w").unwrap().data()[0], 1.25);
    }

    #[test]
    fn mismatched_sets_rejected() {
        let mut params = single(1.0);
        let mut grads = NamedParameterSet::new();
        grads.insert("other", Tensor::zeros(&[1])).unwrap();
        let mut st = OptimizerState::new(0.1, 0.0).unwrap();
        assert!(adamw_step(&mut params, &grads, &mut st).is_err());
    }

    #[test]
    fn state_bound_to_first_parameter_set() {
        let mut params = single(1.0);
        let grads = single(0.5);
        let mut st = OptimizerState::new(0.1, 0.0).unwrap();
        adamw_step(&mut params, &grads, &mut st).unwrap();

        let mut other = NamedParameterSet::new();
        other.insert("v", Tensor::zeros(&[1])).unwrap();
        let mut og = NamedParameterSet::new();
        og.insert("v", Tensor::zeros(&[1])).unwrap();
        assert!(adamw_step(&mut other, &og, &mut st).is_err());
    }
}
