use super::{TrainConfig, TrainError};
use crate::tensor::Tensor;

/// First and second moments per parameter tensor, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl OptState {
    pub fn new(params: &[Tensor]) -> Self {
        OptState {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
        }
    }

    pub fn matches(&self, params: &[Tensor]) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(p, (m, v))| p.shape() == m.shape() && p.shape() == v.shape())
    }
}

/// One Nesterov-Adam step over all tensors:
///
/// ```text
/// m ← β₁m + (1−β₁)g        v ← β₂v + (1−β₂)g²
/// θ ← θ − lr·(β₁m̂ + (1−β₁)g/(1−β₁ᵗ)) / (√v̂ + ε)
/// ```
///
/// Gradients are checked for finiteness before anything is modified.
pub fn nadam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut OptState, config: &TrainConfig) -> Result<(), TrainError> {
    if grads.len() != params.len() || !state.matches(params) {
        return Err(TrainError::Config("optimizer state does not match parameters".into()));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(TrainError::Config(format!("gradient {i} has shape {:?}, parameter {:?}", g.shape(), p.shape())));
        }
        if !g.is_finite() {
            return Err(TrainError::NonFiniteGradient { tensor: i, step: state.t + 1 });
        }
    }
    state.t += 1;
    let (b1, b2, eps, lr) = (config.beta1, config.beta2, config.epsilon, config.lr);
    let t = state.t as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((theta, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *theta -= lr * (b1 * m_hat + (1.0 - b1) * gi / c1) / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
