use serde::{Deserialize, Serialize};

use super::layers::Parameters;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Adam moments for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P, learning_rate: f64) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Self {
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
            learning_rate,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected Adam update of `params` along `grads`.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_tensors = grads.tensors();
        let mut param_tensors = params.tensors_mut();
        if param_tensors.len() != self.first_moment.len() || grad_tensors.len() != param_tensors.len() {
            return Err(Error::dim(
                "AdamState::step tensor count",
                self.first_moment.len(),
                param_tensors.len(),
            ));
        }
        for (i, (p, g)) in param_tensors.iter().zip(&grad_tensors).enumerate() {
            if p.len() != self.first_moment[i].len() || g.len() != p.len() {
                return Err(Error::dim("AdamState::step tensor", self.first_moment[i].len(), p.len()));
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in param_tensors.iter_mut().zip(&grad_tensors).enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{HeadParams, TrunkParams};
    use crate::rng::Rng;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut rng = Rng::new(3);
        let mut trunk = TrunkParams::init(3, &mut rng);
        let before = trunk.clone();
        let mut state = AdamState::new(&trunk, 1e-3);
        state.step(&mut trunk, &before.zeroed()).unwrap();
        assert_eq!(trunk, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // At t=1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut head = HeadParams::zeros();
        let mut grad = HeadParams::zeros();
        for (j, w) in grad.weights.iter_mut().enumerate() {
            *w = 0.5 + j as f64;
        }
        grad.bias = -2.0;
        let mut state = AdamState::new(&head, 1e-3);
        state.step(&mut head, &grad).unwrap();
        for (j, w) in head.weights.iter().enumerate() {
            let g = 0.5 + j as f64;
            let expected = -1e-3 * g / (g + ADAM_EPSILON);
            assert!((w - expected).abs() < 1e-15);
            assert!((w.abs() - 1e-3).abs() < 1e-10);
        }
        assert!((head.bias - 1e-3).abs() < 1e-10);
    }

    #[test]
    fn deterministic_updates() {
        let run = || {
            let mut rng = Rng::new(9);
            let mut trunk = TrunkParams::init(4, &mut rng);
            let mut grad = trunk.zeroed();
            for t in grad.tensors_mut() {
                for v in t.iter_mut() {
                    *v = rng.normal();
                }
            }
            let mut state = AdamState::new(&trunk, 1e-2);
            for _ in 0..5 {
                state.step(&mut trunk, &grad).unwrap();
            }
            trunk.flatten()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut rng = Rng::new(1);
        let mut small = TrunkParams::init(3, &mut rng);
        let big = TrunkParams::init(4, &mut rng);
        let mut state = AdamState::new(&small, 1e-3);
        assert!(state.step(&mut small, &big).is_err());
        assert_eq!(state.step_count(), 0);
    }
}
