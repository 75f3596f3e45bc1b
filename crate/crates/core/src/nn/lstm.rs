use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{sigmoid, Module, Parameter};
use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Hidden and cell state, one row per batch element.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub h: Matrix<T>,
    pub c: Matrix<T>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        LstmState {
            h: Matrix::zeros(batch, hidden),
            c: Matrix::zeros(batch, hidden),
        }
    }
}

/// Everything the backward pass needs from one step.
#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    x: Matrix<T>,
    h_prev: Matrix<T>,
    c_prev: Matrix<T>,
    i: Matrix<T>,
    f: Matrix<T>,
    o: Matrix<T>,
    g: Matrix<T>,
    tanh_c: Matrix<T>,
}

impl<T: Scalar> LstmCache<T> {
    pub fn gates(&self) -> [&Matrix<T>; 4] {
        [&self.i, &self.f, &self.o, &self.g]
    }
}

/// Single LSTM cell. Gate blocks are stacked in the order input, forget, output, candidate:
/// `w: 4H x I`, `u: 4H x H`, `b: 1 x 4H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell<T> {
    pub w: Parameter<T>,
    pub u: Parameter<T>,
    pub b: Parameter<T>,
}

impl<T: Scalar> LstmCell<T> {
    /// Uniform in `±1/sqrt(hidden)` for every gate parameter.
    pub fn new<R: Rng>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        LstmCell {
            w: Parameter::uniform(4 * hidden, inputs, bound, rng),
            u: Parameter::uniform(4 * hidden, hidden, bound, rng),
            b: Parameter::uniform(1, 4 * hidden, bound, rng),
        }
    }

    pub fn zeroed(inputs: usize, hidden: usize) -> Self {
        LstmCell {
            w: Parameter::new(Matrix::zeros(4 * hidden, inputs)),
            u: Parameter::new(Matrix::zeros(4 * hidden, hidden)),
            b: Parameter::new(Matrix::zeros(1, 4 * hidden)),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.value.cols()
    }

    pub fn inputs(&self) -> usize {
        self.w.value.cols()
    }

    pub fn forward(&self, x: &Matrix<T>, prev: &LstmState<T>) -> Result<(LstmState<T>, LstmCache<T>)> {
        let h = self.hidden();
        let batch = x.rows();
        if x.cols() != self.inputs() {
            return Err(Error::Shape(format!(
                "lstm input has {} features, cell expects {}",
                x.cols(),
                self.inputs()
            )));
        }
        if prev.h.shape() != (batch, h) || prev.c.shape() != (batch, h) {
            return Err(Error::Shape(format!(
                "lstm state {:?}/{:?} for batch {batch}, hidden {h}",
                prev.h.shape(),
                prev.c.shape()
            )));
        }
        let mut z = x.matmul_t(&self.w.value)?;
        z.add_assign(&prev.h.matmul_t(&self.u.value)?)?;
        z.add_row_broadcast(&self.b.value)?;

        let i = z.col_range(0, h).map(sigmoid);
        let f = z.col_range(h, 2 * h).map(sigmoid);
        let o = z.col_range(2 * h, 3 * h).map(sigmoid);
        let g = z.col_range(3 * h, 4 * h).map(|v| v.tanh());

        let mut c = f.hadamard(&prev.c)?;
        c.add_assign(&i.hadamard(&g)?)?;
        let tanh_c = c.map(|v| v.tanh());
        let h_new = o.hadamard(&tanh_c)?;

        let cache = LstmCache {
            x: x.clone(),
            h_prev: prev.h.clone(),
            c_prev: prev.c.clone(),
            i,
            f,
            o,
            g,
            tanh_c,
        };
        Ok((LstmState { h: h_new, c }, cache))
    }

    /// Given `dL/dh_t` and `dL/dc_t` (from later steps), accumulates parameter gradients and
    /// returns `(dL/dx_t, dL/dh_{t-1}, dL/dc_{t-1})`.
    pub fn backward(
        &mut self,
        cache: &LstmCache<T>,
        dh: &Matrix<T>,
        dc: &Matrix<T>,
    ) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
        let (batch, h) = cache.i.shape();
        if dh.shape() != (batch, h) || dc.shape() != (batch, h) {
            return Err(Error::Shape("lstm backward gradient shape".into()));
        }
        let one = T::one();
        let mut dz = Matrix::zeros(batch, 4 * h);
        let mut dc_prev = Matrix::zeros(batch, h);
        for r in 0..batch {
            for k in 0..h {
                let (i, f, o, g) = (cache.i.get(r, k), cache.f.get(r, k), cache.o.get(r, k), cache.g.get(r, k));
                let tc = cache.tanh_c.get(r, k);
                let dh_rk = dh.get(r, k);
                let dct = dc.get(r, k) + dh_rk * o * (one - tc * tc);
                let d_o = dh_rk * tc;
                let d_i = dct * g;
                let d_f = dct * cache.c_prev.get(r, k);
                let d_g = dct * i;
                dc_prev.set(r, k, dct * f);
                dz.set(r, k, d_i * i * (one - i));
                dz.set(r, h + k, d_f * f * (one - f));
                dz.set(r, 2 * h + k, d_o * o * (one - o));
                dz.set(r, 3 * h + k, d_g * (one - g * g));
            }
        }
        for p in [&mut self.w, &mut self.u, &mut self.b] {
            if p.grad.shape() != p.value.shape() {
                p.zero_grad();
            }
        }
        dz.t_matmul_into(&cache.x, &mut self.w.grad)?;
        dz.t_matmul_into(&cache.h_prev, &mut self.u.grad)?;
        dz.col_sums_into(&mut self.b.grad)?;
        let dx = dz.matmul(&self.w.value)?;
        let dh_prev = dz.matmul(&self.u.value)?;
        Ok((dx, dh_prev, dc_prev))
    }
}

impl<T: Scalar> Module<T> for LstmCell<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        vec![&self.w, &self.u, &self.b]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.w, &mut self.u, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_parameters_halve_the_cell() {
        let cell = LstmCell::<f64>::zeroed(2, 3);
        let x = Matrix::from_vec(1, 2, vec![0.7, -4.0]).unwrap();
        let prev = LstmState {
            h: Matrix::from_vec(1, 3, vec![0.1, 0.2, 0.3]).unwrap(),
            c: Matrix::from_vec(1, 3, vec![1.0, -2.0, 0.0]).unwrap(),
        };
        let (next, cache) = cell.forward(&x, &prev).unwrap();
        for gate in &cache.gates()[..3] {
            assert!(gate.as_slice().iter().all(|&v| v == 0.5));
        }
        assert!(cache.gates()[3].as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(next.c.as_slice(), &[0.5, -1.0, 0.0]);
        let expect: Vec<f64> = [0.5f64, -1.0, 0.0].iter().map(|c| 0.5 * c.tanh()).collect();
        assert_eq!(next.h.as_slice(), expect.as_slice());
    }

    #[test]
    fn zero_state_and_input_give_zero_hidden() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cell = LstmCell::<f64>::new(2, 4, &mut rng);
        cell.w.value.fill(0.0);
        cell.b.value.fill(0.0);
        let (next, _) = cell
            .forward(&Matrix::zeros(1, 2), &LstmState::zeros(1, 4))
            .unwrap();
        assert!(next.h.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let cell = LstmCell::<f64>::zeroed(2, 3);
        assert!(cell.forward(&Matrix::zeros(1, 3), &LstmState::zeros(1, 3)).is_err());
        assert!(cell.forward(&Matrix::zeros(1, 2), &LstmState::zeros(1, 2)).is_err());
    }
}
