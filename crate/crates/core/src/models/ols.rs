use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lag::LagDataset;
use crate::scalar::Scalar;

/// `ŷ = β0 + β1·conc + β2·aqi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsModel<T> {
    pub beta: [T; 3],
}

impl<T: Scalar> OlsModel<T> {
    pub fn fit(train: &LagDataset<T>) -> Result<Self> {
        let x = design(train);
        let beta = least_squares(&x, &train.targets(), 3)?;
        Ok(OlsModel {
            beta: [beta[0], beta[1], beta[2]],
        })
    }

    pub fn predict_one(&self, conc: T, aqi: T) -> T {
        self.beta[0] + self.beta[1] * conc + self.beta[2] * aqi
    }

    pub fn predict(&self, rows: &LagDataset<T>) -> Vec<T> {
        rows.rows
            .iter()
            .map(|r| self.predict_one(r.x_conc, r.x_aqi))
            .collect()
    }
}

/// Row-major `n x 3` design `[1, conc, aqi]`.
pub fn design<T: Scalar>(ds: &LagDataset<T>) -> Vec<T> {
    ds.rows
        .iter()
        .flat_map(|r| [T::one(), r.x_conc, r.x_aqi])
        .collect()
}

/// Minimizes `|y - Xβ|` for row-major `x` (`n x p`) via Householder QR.
///
/// Errors when `n < p` or when a diagonal entry of `R` is negligible relative to the
/// largest one (rank deficiency).
pub fn least_squares<T: Scalar>(x: &[T], y: &[T], p: usize) -> Result<Vec<T>> {
    let n = y.len();
    if x.len() != n * p {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: n * p,
        });
    }
    if n < p {
        return Err(Error::TooFewRows { min: p - 1, got: n });
    }
    // column-major copy is friendlier for Householder sweeps
    let mut a: Vec<Vec<T>> = (0..p).map(|j| (0..n).map(|i| x[i * p + j]).collect()).collect();
    let mut b = y.to_vec();
    let mut diag = vec![T::zero(); p];

    for k in 0..p {
        let norm = a[k][k..].iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm == T::zero() {
            return Err(Error::RankDeficient);
        }
        let alpha = if a[k][k] > T::zero() { -norm } else { norm };
        // v = a_k[k..] - alpha e_1, stored in place
        a[k][k] -= alpha;
        let vnorm2 = a[k][k..].iter().map(|&v| v * v).sum::<T>();
        diag[k] = alpha;
        if vnorm2 == T::zero() {
            continue;
        }
        let (head, tail) = a.split_at_mut(k + 1);
        let v = &head[k][k..];
        for col in tail.iter_mut() {
            let dot: T = v.iter().zip(&col[k..]).map(|(&vi, &ci)| vi * ci).sum();
            let s = (dot + dot) / vnorm2;
            for (ci, &vi) in col[k..].iter_mut().zip(v) {
                *ci -= s * vi;
            }
        }
        let dot: T = v.iter().zip(&b[k..]).map(|(&vi, &bi)| vi * bi).sum();
        let s = (dot + dot) / vnorm2;
        for (bi, &vi) in b[k..].iter_mut().zip(v) {
            *bi -= s * vi;
        }
    }

    let scale = diag.iter().fold(T::zero(), |m, d| m.max(d.abs()));
    let tol = scale * T::epsilon() * T::of_usize(n.max(p)) * T::of(10.0);
    if diag.iter().any(|d| d.abs() <= tol) {
        return Err(Error::RankDeficient);
    }

    let mut beta = vec![T::zero(); p];
    for k in (0..p).rev() {
        let mut acc = b[k];
        for j in k + 1..p {
            acc -= a[j][k] * beta[j];
        }
        beta[k] = acc / diag[k];
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_square_system() {
        // [[2,1],[1,3]] β = [3,5] → β = (0.8, 1.4)
        let beta = least_squares(&[2.0, 1.0, 1.0, 3.0], &[3.0, 5.0], 2).unwrap();
        assert!((beta[0] - 0.8f64).abs() < 1e-14 && (beta[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn detects_collinear_columns() {
        let x: Vec<f64> = (0..10).flat_map(|i| [1.0, i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(least_squares(&x, &y, 3), Err(Error::RankDeficient)));
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(
            least_squares(&[1.0f64, 2.0, 3.0], &[1.0], 3),
            Err(Error::TooFewRows { .. })
        ));
    }
}
