use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{mean, Scalar};

fn check<T>(truth: &[T], pred: &[T]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::NoSamples);
    }
    Ok(())
}

fn sum_sq_residual<T: Scalar>(truth: &[T], pred: &[T]) -> T {
    truth.iter().zip(pred).map(|(&y, &p)| (y - p) * (y - p)).sum()
}

pub fn mae<T: Scalar>(truth: &[T], pred: &[T]) -> Result<T> {
    check(truth, pred)?;
    let s: T = truth.iter().zip(pred).map(|(&y, &p)| (y - p).abs()).sum();
    Ok(s / T::of_usize(truth.len()))
}

pub fn mse<T: Scalar>(truth: &[T], pred: &[T]) -> Result<T> {
    check(truth, pred)?;
    Ok(sum_sq_residual(truth, pred) / T::of_usize(truth.len()))
}

pub fn rmse<T: Scalar>(truth: &[T], pred: &[T]) -> Result<T> {
    Ok(mse(truth, pred)?.sqrt())
}

/// `SS_res / SS_tot`: the MSE over the population variance of `truth`.
pub fn nmse<T: Scalar>(truth: &[T], pred: &[T]) -> Result<T> {
    check(truth, pred)?;
    let m = mean(truth);
    // the mean predictor hits the numerator's exact summation, so its score is exactly 1
    let ss_tot = sum_sq_residual(truth, &vec![m; truth.len()]);
    if ss_tot == T::zero() {
        return Err(Error::ZeroVariance);
    }
    Ok(sum_sq_residual(truth, pred) / ss_tot)
}

pub fn r2<T: Scalar>(truth: &[T], pred: &[T]) -> Result<T> {
    Ok(T::one() - nmse(truth, pred)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub nmse: f64,
    pub r2: f64,
}

impl MetricBundle {
    pub fn compute<T: Scalar>(truth: &[T], pred: &[T]) -> Result<Self> {
        let mse = mse(truth, pred)?;
        let nmse = nmse(truth, pred)?;
        Ok(MetricBundle {
            mae: mae(truth, pred)?.as_f64(),
            mse: mse.as_f64(),
            rmse: mse.sqrt().as_f64(),
            nmse: nmse.as_f64(),
            r2: (T::one() - nmse).as_f64(),
        })
    }
}
