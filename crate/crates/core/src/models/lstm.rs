use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::Network;
use crate::error::Result;
use crate::nn::{
    relu_backward, relu_forward, Dense, Dropout, LstmCache, LstmCell, LstmState, Matrix, Module, Parameter,
};
use crate::scalar::Scalar;

/// Stacked LSTM over a length-1 sequence (zero initial state) followed by a ReLU/dropout
/// dense head and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNet<T> {
    pub cells: Vec<LstmCell<T>>,
    /// Hidden head layers then the output layer.
    pub head: Vec<Dense<T>>,
    pub dropout: Dropout,
}

pub struct LstmNetCache<T> {
    cells: Vec<LstmCache<T>>,
    head_inputs: Vec<Matrix<T>>,
    head_pre: Vec<Matrix<T>>,
    masks: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> LstmNet<T> {
    pub fn new<R: Rng>(
        inputs: usize,
        lstm_hidden: usize,
        lstm_layers: usize,
        head: &[usize],
        dropout: Dropout,
        rng: &mut R,
    ) -> Self {
        let cells = (0..lstm_layers)
            .map(|i| LstmCell::new(if i == 0 { inputs } else { lstm_hidden }, lstm_hidden, rng))
            .collect();
        let mut widths = vec![lstm_hidden];
        widths.extend_from_slice(head);
        widths.push(1);
        let head = widths.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect();
        LstmNet { cells, head, dropout }
    }
}

impl<T: Scalar> Module<T> for LstmNet<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut p: Vec<&Parameter<T>> = self.cells.iter().flat_map(|c| c.parameters()).collect();
        p.extend(self.head.iter().flat_map(|l| l.parameters()));
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut p: Vec<&mut Parameter<T>> = self.cells.iter_mut().flat_map(|c| c.parameters_mut()).collect();
        p.extend(self.head.iter_mut().flat_map(|l| l.parameters_mut()));
        p
    }
}

impl<T: Scalar> Network<T> for LstmNet<T> {
    type Cache = LstmNetCache<T>;

    fn forward(&self, x: &Matrix<T>, mut rng: Option<&mut ChaCha8Rng>) -> Result<(Matrix<T>, LstmNetCache<T>)> {
        let batch = x.rows();
        let mut cache = LstmNetCache {
            cells: Vec::with_capacity(self.cells.len()),
            head_inputs: Vec::with_capacity(self.head.len()),
            head_pre: Vec::new(),
            masks: Vec::new(),
        };
        let mut h = x.clone();
        for cell in &self.cells {
            let (state, c) = cell.forward(&h, &LstmState::zeros(batch, cell.hidden()))?;
            cache.cells.push(c);
            h = state.h;
        }
        let last = self.head.len() - 1;
        let mut a = h;
        for (i, layer) in self.head.iter().enumerate() {
            let z = layer.forward(&a)?;
            cache.head_inputs.push(a);
            if i == last {
                return Ok((z, cache));
            }
            let (dropped, mask) = self.dropout.forward(&relu_forward(&z), rng.as_deref_mut());
            a = dropped;
            cache.head_pre.push(z);
            cache.masks.push(mask);
        }
        unreachable!("head has an output layer")
    }

    fn backward(&mut self, cache: &LstmNetCache<T>, grad_out: &Matrix<T>) -> Result<()> {
        let mut grad = grad_out.clone();
        for i in (0..self.head.len()).rev() {
            let dx = self.head[i].backward(&cache.head_inputs[i], &grad)?;
            grad = if i > 0 {
                let d = Dropout::backward(cache.masks[i - 1].as_ref(), &dx)?;
                relu_backward(&cache.head_pre[i - 1], &d)?
            } else {
                dx
            };
        }
        for (cell, c) in self.cells.iter_mut().zip(&cache.cells).rev() {
            let dc = Matrix::zeros(grad.rows(), grad.cols());
            let (dx, _, _) = cell.backward(c, &grad, &dc)?;
            grad = dx;
        }
        Ok(())
    }
}
