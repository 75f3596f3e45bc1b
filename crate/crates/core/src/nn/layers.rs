use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A learnable tensor and its accumulated gradient. Equality and serialization only
/// consider the value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Parameter<T> {
    pub value: Matrix<T>,
    #[serde(skip, default = "Matrix::default")]
    pub grad: Matrix<T>,
}

impl<T: PartialEq> PartialEq for Parameter<T> {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl<T: Scalar> Parameter<T> {
    pub fn new(value: Matrix<T>) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Parameter { value, grad }
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform<R: Rng>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| T::of(rng.gen_range(-bound..=bound)))
            .collect();
        Parameter::new(Matrix::from_vec(rows, cols, data).expect("sized by construction"))
    }

    pub fn zero_grad(&mut self) {
        if self.grad.shape() != self.value.shape() {
            self.grad = Matrix::zeros(self.value.rows(), self.value.cols());
        } else {
            self.grad.fill(T::zero());
        }
    }

    pub fn len(&self) -> usize {
        self.value.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Anything that owns parameters in a fixed order.
pub trait Module<T: Scalar> {
    fn parameters(&self) -> Vec<&Parameter<T>>;
    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>>;

    fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    /// Copies of every parameter value, in `parameters()` order.
    fn snapshot(&self) -> Vec<Matrix<T>> {
        self.parameters().iter().map(|p| p.value.clone()).collect()
    }

    fn restore(&mut self, values: &[Matrix<T>]) {
        for (p, v) in self.parameters_mut().into_iter().zip(values) {
            p.value = v.clone();
        }
    }

    fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }
}

/// Fully connected layer `y = x W^T + b` with `W: out x in`, `b: 1 x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

impl<T: Scalar> Dense<T> {
    /// Weights and bias uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Dense {
            weight: Parameter::uniform(outputs, inputs, bound, rng),
            bias: Parameter::uniform(1, outputs, bound, rng),
        }
    }

    pub fn from_parts(weight: Matrix<T>, bias: Matrix<T>) -> Result<Self> {
        if bias.rows() != 1 || bias.cols() != weight.rows() {
            return Err(Error::Shape(format!(
                "bias {:?} for weight {:?}",
                bias.shape(),
                weight.shape()
            )));
        }
        Ok(Dense {
            weight: Parameter::new(weight),
            bias: Parameter::new(bias),
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut y = x.matmul_t(&self.weight.value)?;
        y.add_row_broadcast(&self.bias.value)?;
        Ok(y)
    }

    /// Accumulates `dW += g^T x`, `db += sum_rows(g)` and returns `dx = g W`.
    pub fn backward(&mut self, x: &Matrix<T>, grad_out: &Matrix<T>) -> Result<Matrix<T>> {
        if grad_out.shape() != (x.rows(), self.outputs()) {
            return Err(Error::Shape(format!(
                "dense backward: grad {:?} for input {:?}",
                grad_out.shape(),
                x.shape()
            )));
        }
        if self.weight.grad.shape() != self.weight.value.shape() {
            self.weight.zero_grad();
            self.bias.zero_grad();
        }
        grad_out.t_matmul_into(x, &mut self.weight.grad)?;
        grad_out.col_sums_into(&mut self.bias.grad)?;
        grad_out.matmul(&self.weight.value)
    }
}

impl<T: Scalar> Module<T> for Dense<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        vec![&self.weight, &self.bias]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub fn relu_forward<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes gradient where the forward input was positive.
pub fn relu_backward<T: Scalar>(x: &Matrix<T>, grad_out: &Matrix<T>) -> Result<Matrix<T>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::Shape("relu backward".into()));
    }
    let data = x
        .as_slice()
        .iter()
        .zip(grad_out.as_slice())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Matrix::from_vec(x.rows(), x.cols(), data)
}

/// Inverted dropout: survivors are scaled by `1/(1-rate)` during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dropout {
    rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::DropoutRate(rate));
        }
        Ok(Dropout { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Returns the output and the per-element multiplier applied (`None` when identity).
    pub fn forward<T: Scalar, R: Rng>(
        &self,
        x: &Matrix<T>,
        rng: Option<&mut R>,
    ) -> (Matrix<T>, Option<Matrix<T>>) {
        let Some(rng) = rng else {
            return (x.clone(), None);
        };
        if self.rate == 0.0 {
            return (x.clone(), None);
        }
        let keep = T::of(1.0 / (1.0 - self.rate));
        let mask_data = (0..x.as_slice().len())
            .map(|_| {
                if rng.gen::<f64>() < self.rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let mask = Matrix::from_vec(x.rows(), x.cols(), mask_data).expect("same size");
        let y = x.hadamard(&mask).expect("same shape");
        (y, Some(mask))
    }

    pub fn backward<T: Scalar>(mask: Option<&Matrix<T>>, grad_out: &Matrix<T>) -> Result<Matrix<T>> {
        match mask {
            None => Ok(grad_out.clone()),
            Some(m) => grad_out.hadamard(m),
        }
    }
}

/// Logistic function, branching on sign so `exp` never overflows.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
