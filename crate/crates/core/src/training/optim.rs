use serde::{Deserialize, Serialize};

use crate::diffgraph::Tensor;
use crate::scalar::Scalar;

/// One RMSProp update in place:
/// `state ← decay·state + (1-decay)·g²`, `params ← params - lr·g/√(state + eps)`.
///
/// # Panics
/// If the three slices differ in length.
pub fn rmsprop_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut [T],
    lr: T,
    decay: T,
    eps: T,
) {
    assert!(
        params.len() == grads.len() && grads.len() == state.len(),
        "rmsprop buffers differ in length"
    );
    let one = T::one();
    for ((p, &g), s) in params.iter_mut().zip(grads).zip(state.iter_mut()) {
        *s = decay * *s + (one - decay) * g * g;
        *p = *p - lr * g / (*s + eps).sqrt();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            decay: 0.9,
            eps: 1e-8,
        }
    }
}

impl RmsPropConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// RMSProp over a list of parameter tensors, keeping one state per entry.
#[derive(Clone, Debug)]
pub struct RmsProp<T = f64> {
    pub config: RmsPropConfig,
    state: Vec<Vec<T>>,
}

impl<T: Scalar> RmsProp<T> {
    pub fn new(config: RmsPropConfig) -> Self {
        Self {
            config,
            state: Vec::new(),
        }
    }

    /// Descent step `params -= lr·g/√(state+eps)`.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) {
        if self.state.len() != params.len() {
            self.state = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        }
        let (lr, decay, eps) = (
            T::lit(self.config.lr),
            T::lit(self.config.decay),
            T::lit(self.config.eps),
        );
        for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.state) {
            rmsprop_step(p.data_mut(), g.data(), s, lr, decay, eps);
        }
    }

    /// Ascent step on `grads`.
    pub fn ascend(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) {
        let neg: Vec<Tensor<T>> = grads.iter().map(|g| g.map(|v| -v)).collect();
        self.step(params, &neg);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_decays_state() {
        let mut p = [1.0, -2.0];
        let mut s = [0.5, 0.2];
        rmsprop_step(&mut p, &[0.0, 0.0], &mut s, 1e-4, 0.9, 1e-8);
        assert_eq!(p, [1.0, -2.0]);
        assert_eq!(s, [0.45, 0.9 * 0.2]);
    }

    #[test]
    fn first_step_from_fresh_state() {
        let mut p = [0.0];
        let mut s = [0.0];
        rmsprop_step(&mut p, &[1.0], &mut s, 1e-4, 0.9, 1e-8);
        let want = -1e-4 / (0.1f64 + 1e-8).sqrt();
        assert!((p[0] - want).abs() < 1e-18);
    }

    #[test]
    fn trajectories_are_bit_identical() {
        let run = || {
            let mut p = [0.3f64, -0.7];
            let mut s = [0.0; 2];
            for k in 0..100 {
                let g = [(p[0] * k as f64).sin(), p[1].cos()];
                rmsprop_step(&mut p, &g, &mut s, 1e-2, 0.9, 1e-8);
            }
            p
        };
        assert_eq!(run().map(f64::to_bits), run().map(f64::to_bits));
    }

    #[test]
    fn works_in_single_precision() {
        let mut p = [1.0f32];
        let mut s = [0.0f32];
        rmsprop_step(&mut p, &[2.0], &mut s, 0.1, 0.9, 1e-8);
        assert!(p[0] < 1.0);
    }
}
