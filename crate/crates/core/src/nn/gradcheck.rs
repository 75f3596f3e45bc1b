//! Central finite-difference verification of analytic gradients.

use super::layers::Module;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Magnitudes below this are compared absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(parameter index, flat entry index)` of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub entries: usize,
}

/// Compares the gradients accumulated by `loss` against central differences with step
/// `eps` for every parameter entry of `model`.
///
/// `loss` must run the forward and backward pass and return the scalar loss; it is called
/// with gradients already zeroed. Two evaluations at the unperturbed point must agree
/// bitwise, otherwise the closure is rejected as non-deterministic.
pub fn gradcheck<T, M, F>(model: &mut M, mut loss: F, eps: f64) -> Result<GradCheckReport>
where
    T: Scalar,
    M: Module<T>,
    F: FnMut(&mut M) -> Result<T>,
{
    model.zero_grad();
    let first = loss(model)?;
    let analytic: Vec<Vec<T>> = model
        .parameters()
        .iter()
        .map(|p| p.grad.as_slice().to_vec())
        .collect();
    model.zero_grad();
    let second = loss(model)?;
    if first != second && !(first.is_nan() && second.is_nan()) {
        return Err(Error::NonDeterministic {
            first: first.as_f64(),
            second: second.as_f64(),
        });
    }

    let step = T::of(eps);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        entries: 0,
    };
    let n_params = analytic.len();
    for pi in 0..n_params {
        for k in 0..analytic[pi].len() {
            let original = model.parameters()[pi].value.as_slice()[k];
            let mut eval = |model: &mut M, v: T| -> Result<T> {
                model.parameters_mut()[pi].value.as_mut_slice()[k] = v;
                model.zero_grad();
                loss(model)
            };
            let plus = eval(model, original + step)?;
            let minus = eval(model, original - step)?;
            model.parameters_mut()[pi].value.as_mut_slice()[k] = original;

            let numeric = ((plus - minus) / (step + step)).as_f64();
            let a = analytic[pi][k].as_f64();
            let denom = a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            let rel = (a - numeric).abs() / denom;
            report.entries += 1;
            if rel > report.max_relative_error || rel.is_nan() {
                report.max_relative_error = rel;
                report.worst = (pi, k);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    model.zero_grad();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_mse_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut layer = Dense::<f64>::new(3, 2, &mut rng);
        let x = Matrix::from_vec(4, 3, (0..12).map(|v| v as f64 * 0.3 - 1.0).collect()).unwrap();
        let y = Matrix::from_vec(4, 2, (0..8).map(|v| (v as f64).sin()).collect()).unwrap();
        let report = gradcheck(
            &mut layer,
            |m| {
                let out = m.forward(&x)?;
                let n = out.as_slice().len() as f64;
                let diff: Vec<f64> = out.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a - b).collect();
                let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
                let g = Matrix::from_vec(4, 2, diff.iter().map(|d| 2.0 * d / n).collect())?;
                m.backward(&x, &g)?;
                Ok(loss)
            },
            1e-3,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-7, "{report:?}");
        assert_eq!(report.entries, 8);
    }

    #[test]
    fn detects_nondeterminism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Dense::<f64>::new(1, 1, &mut rng);
        let mut calls = 0.0;
        let err = gradcheck(
            &mut layer,
            |_| {
                calls += 1.0;
                Ok(calls)
            },
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonDeterministic { .. }));
    }

    #[test]
    fn reports_wrong_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut layer = Dense::<f64>::new(2, 1, &mut rng);
        let x = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let report = gradcheck(
            &mut layer,
            |m| {
                let out = m.forward(&x)?;
                // deliberately doubled gradient
                m.backward(&x, &Matrix::from_vec(1, 1, vec![2.0])?)?;
                Ok(out.get(0, 0))
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_relative_error > 0.4);
    }
}
