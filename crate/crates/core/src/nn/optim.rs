use serde::{Deserialize, Serialize};

use super::layers::Parameter;
use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adam,
    /// Adam with weight decay applied directly to the parameter values.
    AdamW,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    /// Decay defaults to 0.01.
    pub fn adamw(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::AdamW,
            weight_decay: 0.01,
            ..Self::adam(learning_rate)
        }
    }

    pub fn of_kind(kind: OptimizerKind, learning_rate: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Self::adam(learning_rate),
            OptimizerKind::AdamW => Self::adamw(learning_rate),
        }
    }
}

/// Bias-corrected Adam/AdamW with one moment pair per parameter.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    pub config: OptimizerConfig,
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
    step: u64,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(config: OptimizerConfig) -> Self {
        Optimizer {
            config,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    pub fn step(&mut self, params: Vec<&mut Parameter<T>>) -> Result<()> {
        if self.first.is_empty() {
            self.first = params
                .iter()
                .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect();
            self.second = self.first.clone();
        }
        if params.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, got {}",
                self.first.len(),
                params.len()
            )));
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let one = T::one();
        let lr = T::of(c.learning_rate);
        let eps = T::of(c.eps);
        let bias1 = one - T::of(c.beta1.powi(self.step as i32));
        let bias2 = one - T::of(c.beta2.powi(self.step as i32));
        let decay = match c.kind {
            OptimizerKind::AdamW if c.weight_decay != 0.0 => Some(one - lr * T::of(c.weight_decay)),
            _ => None,
        };

        for ((p, m), v) in params.into_iter().zip(&mut self.first).zip(&mut self.second) {
            if p.grad.shape() != p.value.shape() || m.shape() != p.value.shape() {
                return Err(Error::Shape("optimizer parameter/gradient shape".into()));
            }
            let grads = p.grad.as_slice();
            let values = p.value.as_mut_slice();
            let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
            for k in 0..values.len() {
                let mut g = grads[k];
                if c.kind == OptimizerKind::Adam && c.weight_decay != 0.0 {
                    g += T::of(c.weight_decay) * values[k];
                }
                ms[k] = b1 * ms[k] + (one - b1) * g;
                vs[k] = b2 * vs[k] + (one - b2) * g * g;
                if let Some(d) = decay {
                    values[k] *= d;
                }
                let m_hat = ms[k] / bias1;
                let v_hat = vs[k] / bias2;
                values[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Parameter<f64> {
        Parameter::new(Matrix::from_vec(1, 1, vec![v]).unwrap())
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [0.003, 5.0, -40.0] {
            let mut p = scalar_param(1.0);
            p.grad.set(0, 0, g);
            let mut opt = Optimizer::new(OptimizerConfig::adam(0.01));
            opt.step(vec![&mut p]).unwrap();
            let moved = p.value.get(0, 0) - 1.0;
            assert!((moved + 0.01 * g.signum()).abs() < 1e-6 * 0.01 / g.abs() + 1e-12, "{moved}");
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = scalar_param(2.5);
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.1));
        for _ in 0..10 {
            p.zero_grad();
            opt.step(vec![&mut p]).unwrap();
        }
        assert_eq!(p.value.get(0, 0), 2.5);
        let mut cfg = OptimizerConfig::adamw(0.1);
        cfg.weight_decay = 0.0;
        let mut opt = Optimizer::new(cfg);
        opt.step(vec![&mut p]).unwrap();
        assert_eq!(p.value.get(0, 0), 2.5);
    }

    #[test]
    fn adamw_decays_values_not_gradients() {
        let mut p = scalar_param(2.0);
        p.zero_grad();
        let mut opt = Optimizer::new(OptimizerConfig::adamw(0.1));
        opt.step(vec![&mut p]).unwrap();
        // zero gradient: only the decoupled decay acts
        assert!((p.value.get(0, 0) - 2.0 * (1.0 - 0.1 * 0.01)).abs() < 1e-15);
    }

    #[test]
    fn minimizes_a_quadratic() {
        // recurrence on f(w) = (w - 3)^2 from w = 0
        let mut p = scalar_param(0.0);
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.1));
        for _ in 0..100 {
            let w = p.value.get(0, 0);
            p.grad.set(0, 0, 2.0 * (w - 3.0));
            opt.step(vec![&mut p]).unwrap();
        }
        assert!((p.value.get(0, 0) - 3.0).abs() < 0.05, "{}", p.value.get(0, 0));
    }
}
