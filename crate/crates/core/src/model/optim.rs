use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::head::{HeadGradient, LinearHead};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Gd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer {
            kind: OptimizerKind::Adam,
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for one head; unused by plain descent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: u32,
}

impl Optimizer {
    pub fn validate(&self) -> Result<()> {
        // zero is allowed: it freezes the parameters
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::InvalidParameter("bad Adam moments".into()));
        }
        Ok(())
    }

    pub fn step<T: Real>(&self, head: &mut LinearHead<T>, grad: &HeadGradient<T>, state: &mut OptimizerState<T>) {
        let lr = T::lit(self.learning_rate);
        let params = head.weights.iter_mut().chain(head.biases.iter_mut());
        let grads = grad.weights.iter().chain(&grad.biases);
        match self.kind {
            OptimizerKind::Gd => {
                for (p, &g) in params.zip(grads) {
                    *p = *p - lr * g;
                }
            }
            OptimizerKind::Adam => {
                let n = grad.weights.len() + grad.biases.len();
                if state.m.len() != n {
                    state.m = vec![T::zero(); n];
                    state.v = vec![T::zero(); n];
                    state.step = 0;
                }
                state.step += 1;
                let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
                let c1 = T::one() - b1.powi(state.step as i32);
                let c2 = T::one() - b2.powi(state.step as i32);
                let eps = T::lit(self.epsilon);
                for (((p, &g), m), v) in params.zip(grads).zip(&mut state.m).zip(&mut state.v) {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    *p = *p - lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Activation;

    #[test]
    fn zero_rate_freezes() {
        let mut head = LinearHead::<f64>::random(3, 2, Activation::Sigmoid, 1.0, 4);
        let before = head.clone();
        let g = HeadGradient {
            weights: vec![1.0; 6],
            biases: vec![-1.0; 2],
        };
        for kind in [OptimizerKind::Gd, OptimizerKind::Adam] {
            let opt = Optimizer {
                kind,
                learning_rate: 0.0,
                ..Default::default()
            };
            opt.step(&mut head, &g, &mut OptimizerState::default());
            assert_eq!(head, before);
        }
    }

    #[test]
    fn descent_direction() {
        let mut head = LinearHead::<f64>::zeros(1, 1, Activation::Sigmoid);
        let g = HeadGradient {
            weights: vec![2.0],
            biases: vec![-4.0],
        };
        let opt = Optimizer {
            kind: OptimizerKind::Gd,
            learning_rate: 0.5,
            ..Default::default()
        };
        opt.step(&mut head, &g, &mut OptimizerState::default());
        assert_eq!(head.weights, vec![-1.0]);
        assert_eq!(head.biases, vec![2.0]);
        assert!(Optimizer { learning_rate: -1.0, ..Default::default() }.validate().is_err());
    }
}
