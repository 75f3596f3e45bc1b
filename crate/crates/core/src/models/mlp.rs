use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::Network;
use crate::error::Result;
use crate::nn::{relu_backward, relu_forward, Dense, Matrix, Module, Parameter};
use crate::scalar::Scalar;

/// Fully connected ReLU network with a single linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet<T> {
    pub layers: Vec<Dense<T>>,
}

pub struct MlpCache<T> {
    /// Input of every layer.
    inputs: Vec<Matrix<T>>,
    /// Pre-activation of every hidden layer.
    pre: Vec<Matrix<T>>,
}

impl<T: Scalar> MlpNet<T> {
    pub fn new<R: Rng>(inputs: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut widths = vec![inputs];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let layers = widths.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect();
        MlpNet { layers }
    }
}

impl<T: Scalar> Module<T> for MlpNet<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        self.layers.iter().flat_map(|l| l.parameters()).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.layers.iter_mut().flat_map(|l| l.parameters_mut()).collect()
    }
}

impl<T: Scalar> Network<T> for MlpNet<T> {
    type Cache = MlpCache<T>;

    fn forward(&self, x: &Matrix<T>, _rng: Option<&mut ChaCha8Rng>) -> Result<(Matrix<T>, MlpCache<T>)> {
        let last = self.layers.len() - 1;
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(last),
        };
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&a)?;
            cache.inputs.push(a);
            if i == last {
                return Ok((z, cache));
            }
            a = relu_forward(&z);
            cache.pre.push(z);
        }
        unreachable!("network has at least one layer")
    }

    fn backward(&mut self, cache: &MlpCache<T>, grad_out: &Matrix<T>) -> Result<()> {
        let mut grad = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            let dx = self.layers[i].backward(&cache.inputs[i], &grad)?;
            if i > 0 {
                grad = relu_backward(&cache.pre[i - 1], &dx)?;
            }
        }
        Ok(())
    }
}
