//! Shared gradient-descent loop for the MLP and LSTM families, with the composite
//! data/physics loss.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::Hyperparams;
use crate::error::{Error, Result};
use crate::nn::{EarlyStopper, Matrix, Module, Optimizer, OptimizerConfig, PlateauScheduler, StopDecision};
use crate::physics::LossWeights;
use crate::scalar::Scalar;

/// A network with a single scalar output per row.
pub trait Network<T: Scalar>: Module<T> {
    type Cache;

    /// `rng` enables training-mode stochastic layers; `None` is inference.
    fn forward(&self, x: &Matrix<T>, rng: Option<&mut ChaCha8Rng>) -> Result<(Matrix<T>, Self::Cache)>;

    /// Accumulates parameter gradients for `dL/d output`.
    fn backward(&mut self, cache: &Self::Cache, grad_out: &Matrix<T>) -> Result<()>;

    fn predict(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        Ok(self.forward(x, None)?.0.into_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sample-weighted means over the epoch's batches.
    pub data_loss: f64,
    /// Present whenever a physics reference was supplied, even if its weight is zero.
    pub physics_loss: Option<f64>,
    pub total_loss: f64,
    pub validation_loss: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept, when validation drove the run.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Inputs in the network's own (possibly scaled) spaces.
pub struct TrainingData<'a, T> {
    pub x: &'a Matrix<T>,
    pub y: &'a [T],
    /// Breakpoint AQI per row, in the same space as `y`.
    pub reference: Option<&'a [T]>,
}

struct Losses<T> {
    data: T,
    physics: Option<T>,
}

/// Mean losses of `pred`, and (optionally) the gradient of the weighted total.
fn losses<T: Scalar>(
    pred: &[T],
    y: &[T],
    reference: Option<&[T]>,
    w: LossWeights,
    want_grad: bool,
) -> (Losses<T>, Vec<T>) {
    let n = T::of_usize(pred.len());
    let cd = T::of(2.0 * w.lambda_data) / n;
    let cp = T::of(2.0 * w.lambda_phys) / n;
    let mut data = T::zero();
    let mut phys = T::zero();
    let mut grad = Vec::with_capacity(if want_grad { pred.len() } else { 0 });
    for (i, (&p, &t)) in pred.iter().zip(y).enumerate() {
        let r = p - t;
        data += r * r;
        let mut g = cd * r;
        if let Some(f) = reference {
            let rp = p - f[i];
            phys += rp * rp;
            // adding only when weighted keeps λ_phys = 0 bit-identical to the data-only path
            if w.lambda_phys != 0.0 {
                g += cp * rp;
            }
        }
        if want_grad {
            grad.push(g);
        }
    }
    let l = Losses {
        data: data / n,
        physics: reference.map(|_| phys / n),
    };
    (l, grad)
}

fn weighted<T: Scalar>(l: &Losses<T>, w: LossWeights) -> f64 {
    w.lambda_data * l.data.as_f64() + w.lambda_phys * l.physics.map_or(0.0, |p| p.as_f64())
}

/// Trains `net` in temporal batch order. With `validation_fraction > 0`, the final slice of
/// the rows is held out to drive the plateau scheduler and early stopping, and the best
/// validation weights are restored at the end.
pub fn train<T: Scalar, N: Network<T>>(
    net: &mut N,
    data: TrainingData<'_, T>,
    hyper: &Hyperparams,
    weights: LossWeights,
    rng: &mut ChaCha8Rng,
) -> Result<TrainingHistory> {
    let n = data.y.len();
    if data.x.rows() != n {
        return Err(Error::LengthMismatch {
            left: data.x.rows(),
            right: n,
        });
    }
    if let Some(r) = data.reference {
        if r.len() != n {
            return Err(Error::LengthMismatch { left: r.len(), right: n });
        }
    }
    let n_val = if hyper.validation_fraction > 0.0 {
        ((n as f64 * hyper.validation_fraction).floor() as usize).max(1)
    } else {
        0
    };
    if n <= n_val {
        return Err(Error::TooFewRows { min: n_val, got: n });
    }
    let n_fit = n - n_val;
    let batch = hyper.batch_size.unwrap_or(n_fit).min(n_fit);

    let fit_x = data.x.row_range(0, n_fit);
    let batches: Vec<(Matrix<T>, &[T], Option<&[T]>)> = (0..n_fit)
        .step_by(batch)
        .map(|s| {
            let e = (s + batch).min(n_fit);
            (
                if s == 0 && e == n_fit { fit_x.clone() } else { fit_x.row_range(s, e) },
                &data.y[s..e],
                data.reference.map(|r| &r[s..e]),
            )
        })
        .collect();
    let val = (n_val > 0).then(|| {
        (
            data.x.row_range(n_fit, n),
            &data.y[n_fit..],
            data.reference.map(|r| &r[n_fit..]),
        )
    });

    let mut config = OptimizerConfig::of_kind(hyper.optimizer, hyper.learning_rate);
    config.weight_decay = hyper.weight_decay;
    let mut opt = Optimizer::new(config);
    let mut scheduler = PlateauScheduler::new(hyper.scheduler_factor, hyper.scheduler_patience, hyper.min_delta);
    let mut stopper = EarlyStopper::new(hyper.early_stopping_patience, hyper.min_delta);
    let mut best = None;
    let mut history = TrainingHistory::default();

    for epoch in 1..=hyper.epochs {
        let lr = opt.learning_rate();
        let (mut data_sum, mut phys_sum) = (0.0, 0.0);
        for (xb, yb, rb) in &batches {
            let (out, cache) = net.forward(xb, Some(rng))?;
            let (l, grad) = losses(out.as_slice(), yb, *rb, weights, true);
            let m = yb.len() as f64;
            data_sum += l.data.as_f64() * m;
            phys_sum += l.physics.map_or(0.0, |p| p.as_f64()) * m;
            net.zero_grad();
            net.backward(&cache, &Matrix::from_vec(yb.len(), 1, grad)?)?;
            opt.step(net.parameters_mut())?;
        }
        let data_loss = data_sum / n_fit as f64;
        let physics_loss = data.reference.map(|_| phys_sum / n_fit as f64);
        let total_loss = weights.lambda_data * data_loss + weights.lambda_phys * physics_loss.unwrap_or(0.0);
        if !total_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss at epoch {epoch} (data {data_loss}, physics {physics_loss:?})"
            )));
        }

        let mut validation_loss = None;
        let mut decision = StopDecision::Continue;
        if let Some((vx, vy, vr)) = &val {
            let pred = net.predict(vx)?;
            let (l, _) = losses(&pred, vy, *vr, weights, false);
            let v = weighted(&l, weights);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
            }
            validation_loss = Some(v);
            opt.set_learning_rate(scheduler.step(v, lr));
            decision = stopper.step(epoch, v);
            if decision == StopDecision::Improved {
                best = Some(net.snapshot());
            }
        }
        history.epochs.push(EpochRecord {
            epoch,
            data_loss,
            physics_loss,
            total_loss,
            validation_loss,
            learning_rate: lr,
        });
        if decision == StopDecision::Stop {
            history.stopped_early = true;
            break;
        }
    }
    if let Some(snapshot) = best {
        net.restore(&snapshot);
        history.best_epoch = stopper.best_epoch();
    }
    Ok(history)
}
