//! SARIMAX(1,1,1)x(1,0,1,7) with one exogenous regressor, estimated by conditional sum of
//! squares.
//!
//! The model is a regression with seasonal ARIMA errors: with `w_t = Δy_t − β Δx_t`,
//!
//! ```text
//! (1 − φB)(1 − ΦB^7) w_t = (1 + θB)(1 + ΘB^7) ε_t
//! ```
//!
//! Pre-sample `w` and `ε` are zero; the squared residuals are summed from the first index
//! whose full lag window (8 steps) lies inside the differenced sample.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::neldermead::NelderMead;
use super::spec::{SarimaxForecast, SarimaxSettings};
use crate::error::{Error, Result};
use crate::lag::LagDataset;
use crate::scalar::{mean, population_variance, Scalar};

pub const PERIOD: usize = 7;
/// First grid index entering the CSS objective.
const CSS_START: usize = PERIOD + 2;
/// Series must be longer than two seasons plus the differencing and AR lags.
pub const MIN_LENGTH: usize = 2 * PERIOD + 2;
/// Coefficients are kept strictly inside the unit interval.
const BOUND: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarimaxParams<T> {
    pub phi: T,
    pub theta: T,
    pub seasonal_phi: T,
    pub seasonal_theta: T,
    pub beta: T,
    pub sigma2: T,
    /// Non-seasonal differencing order; always 1.
    pub d: usize,
}

impl<T: Scalar> SarimaxParams<T> {
    pub fn zero() -> Self {
        SarimaxParams {
            phi: T::zero(),
            theta: T::zero(),
            seasonal_phi: T::zero(),
            seasonal_theta: T::zero(),
            beta: T::zero(),
            sigma2: T::zero(),
            d: 1,
        }
    }

    /// Stationary AR parts and invertible MA parts.
    pub fn is_admissible(&self) -> bool {
        [self.phi, self.theta, self.seasonal_phi, self.seasonal_theta]
            .iter()
            .all(|c| c.abs() < T::one())
    }

    pub fn to_f64(&self) -> SarimaxParams<f64> {
        SarimaxParams {
            phi: self.phi.as_f64(),
            theta: self.theta.as_f64(),
            seasonal_phi: self.seasonal_phi.as_f64(),
            seasonal_theta: self.seasonal_theta.as_f64(),
            beta: self.beta.as_f64(),
            sigma2: self.sigma2.as_f64(),
            d: self.d,
        }
    }

    /// Maps the optimizer's free coordinates back to coefficients. `free` selects which of
    /// (φ, θ, Φ, Θ) are estimated; the rest stay zero. β is last unless fixed.
    fn from_unconstrained(u: &[f64], free: [bool; 4], beta: Option<f64>) -> Self {
        let mut it = u.iter().copied();
        let mut c = |on: bool| if on { T::of(BOUND * it.next().expect("free coordinate").tanh()) } else { T::zero() };
        let (phi, theta, seasonal_phi, seasonal_theta) = (c(free[0]), c(free[1]), c(free[2]), c(free[3]));
        SarimaxParams {
            phi,
            theta,
            seasonal_phi,
            seasonal_theta,
            beta: T::of(beta.unwrap_or_else(|| u[u.len() - 1])),
            sigma2: T::zero(),
            d: 1,
        }
    }
}

/// One-step predictions and residuals of `y` given the aligned regressor `x`.
///
/// `pred[0] = y[0]` and `eps[0] = 0`: the first observation has no history.
pub fn one_step<T: Scalar>(p: &SarimaxParams<T>, y: &[T], x: &[T]) -> (Vec<T>, Vec<T>) {
    let n = y.len();
    let mut w = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    let mut pred = vec![T::zero(); n];
    if n == 0 {
        return (pred, e);
    }
    pred[0] = y[0];
    for k in 1..n {
        let dx = x[k] - x[k - 1];
        w[k] = y[k] - y[k - 1] - p.beta * dx;
        let w_hat = arma_mean(p, &w, &e, k);
        pred[k] = y[k - 1] + p.beta * dx + w_hat;
        e[k] = w[k] - w_hat;
    }
    (pred, e)
}

/// Conditional expectation of `w_k` from lags of `w` and `e` (zero before index 1).
#[inline]
fn arma_mean<T: Scalar>(p: &SarimaxParams<T>, w: &[T], e: &[T], k: usize) -> T {
    let at = |v: &[T], lag: usize| if k > lag { v[k - lag] } else { T::zero() };
    p.phi * at(w, 1) + p.seasonal_phi * at(w, PERIOD) - p.phi * p.seasonal_phi * at(w, PERIOD + 1)
        + p.theta * at(e, 1)
        + p.seasonal_theta * at(e, PERIOD)
        + p.theta * p.seasonal_theta * at(e, PERIOD + 1)
}

/// Sum of squared one-step residuals from the first full-window index, and its term count.
pub fn css<T: Scalar>(p: &SarimaxParams<T>, y: &[T], x: &[T]) -> (T, usize) {
    let (_, e) = one_step(p, y, x);
    let tail = e.get(CSS_START..).unwrap_or(&[]);
    (tail.iter().map(|&v| v * v).sum(), tail.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFit<T> {
    pub params: SarimaxParams<T>,
    pub css: T,
    pub iterations: usize,
}

/// Estimates the five coefficients of `y` on the already-aligned regressor `x`.
pub fn fit_series<T: Scalar>(y: &[T], x: &[T], settings: &SarimaxSettings) -> Result<SeriesFit<T>> {
    let n = y.len();
    if x.len() != n {
        return Err(Error::LengthMismatch { left: n, right: x.len() });
    }
    if n <= MIN_LENGTH {
        return Err(Error::TooFewRows {
            min: MIN_LENGTH,
            got: n,
        });
    }
    if y.iter().chain(x).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SARIMAX input".into()));
    }

    // β starts at the no-intercept regression of Δy on Δx
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for k in 1..n {
        let dx = (x[k] - x[k - 1]).as_f64();
        let dy = (y[k] - y[k - 1]).as_f64();
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // a constant regressor leaves β unidentified; pin it to zero
    let beta = if sxx > 0.0 {
        BetaStart::Free {
            start: sxy / sxx,
            step: 0.1 * (sxy / sxx).abs().max((syy / sxx).sqrt()).max(f64::MIN_POSITIVE),
        }
    } else {
        BetaStart::Fixed(0.0)
    };
    let nm = NelderMead {
        max_iterations: settings.max_iterations,
        tolerance: settings.tolerance,
    };

    let full = estimate(y, x, &nm, [true; 4], beta);
    let mut iterations = full.iterations;
    let mut best = full.clone();
    // An AR factor cancelling its MA partner, (1 − φB) ≈ (1 + θB), is not identified: CSS is
    // nearly flat along φ = −θ and the optimizer drifts along the ridge. Such pairs are
    // dropped unless BIC prefers keeping them.
    let cancels = |a: T, b: T| (a + b).abs().as_f64() < CANCEL_TOLERANCE && a.abs().as_f64() > CANCEL_TOLERANCE;
    let pairs = [
        cancels(full.params.phi, full.params.theta),
        cancels(full.params.seasonal_phi, full.params.seasonal_theta),
    ];
    let candidates: Vec<[bool; 4]> = match pairs {
        [true, true] => vec![[false, false, true, true], [true, true, false, false], [false; 4]],
        [true, false] => vec![[false, false, true, true]],
        [false, true] => vec![[true, true, false, false]],
        [false, false] => Vec::new(),
    };
    for free in candidates {
        let reduced = estimate(y, x, &nm, free, beta);
        iterations += reduced.iterations;
        if reduced.converged && reduced.bic <= best.bic {
            best = reduced;
        }
    }
    if !best.converged {
        return Err(Error::SarimaxNotConverged {
            params: Box::new(best.params.to_f64()),
            iterations,
        });
    }
    Ok(SeriesFit {
        params: best.params,
        css: best.css,
        iterations,
    })
}

/// Largest |φ + θ| still treated as a cancelling pair (and smallest |φ| worth pruning).
const CANCEL_TOLERANCE: f64 = 0.1;

#[derive(Clone, Copy)]
enum BetaStart {
    Free { start: f64, step: f64 },
    Fixed(f64),
}

#[derive(Clone)]
struct Estimate<T> {
    params: SarimaxParams<T>,
    css: T,
    bic: f64,
    iterations: usize,
    converged: bool,
}

/// CSS minimization over the coefficients selected by `free` (plus β when free).
fn estimate<T: Scalar>(y: &[T], x: &[T], nm: &NelderMead, free: [bool; 4], beta: BetaStart) -> Estimate<T> {
    let fixed_beta = match beta {
        BetaStart::Fixed(b) => Some(b),
        BetaStart::Free { .. } => None,
    };
    let objective = |u: &[f64]| {
        let p = SarimaxParams::<T>::from_unconstrained(u, free, fixed_beta);
        let (s, m) = css(&p, y, x);
        s.as_f64() / m as f64
    };
    let k = free.iter().filter(|&&f| f).count();
    let mut x0 = vec![0.0; k];
    let mut steps = vec![0.1; k];
    if let BetaStart::Free { start, step } = beta {
        x0.push(start);
        steps.push(step);
    }
    let first = nm.minimize(objective, &x0, &steps);
    // one restart from the incumbent guards against a collapsed simplex
    let second = nm.minimize(objective, &first.x, &steps);
    let chosen = if second.value <= first.value { &second } else { &first };
    let mut params = SarimaxParams::<T>::from_unconstrained(&chosen.x, free, fixed_beta);
    let (s, m) = css(&params, y, x);
    params.sigma2 = s / T::of_usize(m);
    let bic = m as f64 * params.sigma2.as_f64().max(f64::MIN_POSITIVE).ln() + (m as f64).ln() * x0.len() as f64;
    Estimate {
        params,
        css: s,
        bic,
        iterations: first.iterations + second.iterations,
        converged: second.converged,
    }
}

/// Fitted SARIMAX over a lag dataset: the endogenous series is the target column, the
/// regressor is the previous calendar day's concentration, both on a forward-filled daily grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarimaxModel<T> {
    pub params: SarimaxParams<T>,
    pub lag: usize,
    pub settings: SarimaxSettings,
    /// `(mean, std)` of the train concentration when the regressor is standardized.
    pub exog_scale: Option<(T, T)>,
    pub css: T,
    pub iterations: usize,
    /// Training rows `(date, target, concentration)`: predictions condition on them.
    history: Vec<(NaiveDate, T, T)>,
}

/// Daily grid from the first to the last date with gaps forward-filled.
struct Grid<T> {
    start: NaiveDate,
    y: Vec<T>,
    /// `x[k]` is the concentration of the day before grid day `k` (day 0 reuses its own).
    x: Vec<T>,
}

impl<T: Scalar> Grid<T> {
    fn build(rows: &BTreeMap<NaiveDate, (T, T)>) -> Option<Self> {
        let (&start, _) = rows.iter().next()?;
        let (&end, _) = rows.iter().next_back()?;
        let days = (end - start).num_days() as usize + 1;
        let mut y = Vec::with_capacity(days);
        let mut conc = Vec::with_capacity(days);
        let mut last = *rows.values().next()?;
        for k in 0..days {
            let day = start + Duration::days(k as i64);
            if let Some(&v) = rows.get(&day) {
                last = v;
            }
            y.push(last.0);
            conc.push(last.1);
        }
        let mut x = Vec::with_capacity(days);
        x.push(conc[0]);
        x.extend_from_slice(&conc[..days - 1]);
        Some(Grid { start, y, x })
    }

    fn index(&self, date: NaiveDate) -> usize {
        (date - self.start).num_days() as usize
    }
}

impl<T: Scalar> SarimaxModel<T> {
    pub fn fit(train: &LagDataset<T>, settings: &SarimaxSettings) -> Result<Self> {
        let history: Vec<(NaiveDate, T, T)> = train
            .rows
            .iter()
            .map(|r| (r.date, r.y_future_aqi, r.x_conc))
            .collect();
        let exog_scale = if settings.scale_exog {
            let conc = train.conc();
            let sd = population_variance(&conc).sqrt();
            if sd == T::zero() {
                return Err(Error::DegenerateColumn {
                    column: "X_CONC".into(),
                    scaler: "standard",
                });
            }
            Some((mean(&conc), sd))
        } else {
            None
        };
        let mut model = SarimaxModel {
            params: SarimaxParams::zero(),
            lag: train.lag,
            settings: settings.clone(),
            exog_scale,
            css: T::zero(),
            iterations: 0,
            history,
        };
        let grid = model.grid(&[])?;
        let fit = fit_series(&grid.y, &grid.x, settings)?;
        model.params = fit.params;
        model.css = fit.css;
        model.iterations = fit.iterations;
        Ok(model)
    }

    fn grid(&self, extra: &[(NaiveDate, T, T)]) -> Result<Grid<T>> {
        let mut merged: BTreeMap<NaiveDate, (T, T)> = BTreeMap::new();
        for &(d, y, c) in self.history.iter().chain(extra) {
            let c = match self.exog_scale {
                Some((m, s)) => (c - m) / s,
                None => c,
            };
            merged.insert(d, (y, c));
        }
        Grid::build(&merged).ok_or(Error::EmptyDataset)
    }

    /// One-step residuals over the training grid.
    pub fn residuals(&self) -> Result<Vec<T>> {
        let g = self.grid(&[])?;
        Ok(one_step(&self.params, &g.y, &g.x).1)
    }

    /// Predictions for `rows`, conditioning on the training history plus the supplied rows
    /// (which take precedence on shared dates).
    pub fn predict(&self, rows: &LagDataset<T>) -> Result<Vec<T>> {
        let extra: Vec<(NaiveDate, T, T)> = rows
            .rows
            .iter()
            .map(|r| (r.date, r.y_future_aqi, r.x_conc))
            .collect();
        let g = self.grid(&extra)?;
        let p = &self.params;
        let (pred, e) = one_step(p, &g.y, &g.x);
        Ok(match self.settings.forecast {
            SarimaxForecast::RollingOneStep => {
                rows.rows.iter().map(|r| pred[g.index(r.date)]).collect()
            }
            SarimaxForecast::RecursiveHorizon => {
                let w: Vec<T> = (0..g.y.len())
                    .map(|k| {
                        if k == 0 {
                            T::zero()
                        } else {
                            g.y[k] - g.y[k - 1] - p.beta * (g.x[k] - g.x[k - 1])
                        }
                    })
                    .collect();
                rows.rows
                    .iter()
                    .map(|r| recursive(p, &g, &w, &e, g.index(r.date), self.lag))
                    .collect()
            }
        })
    }
}

/// `horizon`-step forecast of grid index `k` using observations up to `k − horizon` only;
/// unobserved shocks are set to zero and regressors are taken as observed.
fn recursive<T: Scalar>(p: &SarimaxParams<T>, g: &Grid<T>, w: &[T], e: &[T], k: usize, horizon: usize) -> T {
    if k == 0 {
        return g.y[0];
    }
    let origin = k.saturating_sub(horizon);
    let mut w_path = w[..=origin].to_vec();
    let mut e_path = e[..=origin].to_vec();
    let mut level = g.y[origin];
    for j in origin + 1..=k {
        w_path.push(T::zero());
        e_path.push(T::zero());
        let w_hat = arma_mean(p, &w_path, &e_path, j);
        w_path[j] = w_hat;
        level = level + p.beta * (g.x[j] - g.x[j - 1]) + w_hat;
    }
    level
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use crate::synthetic::standard_normal as normal;

    fn fit(y: &[f64], x: &[f64]) -> SarimaxParams<f64> {
        fit_series(y, x, &SarimaxSettings::default()).unwrap().params
    }

    #[test]
    fn one_step_residual_identity() {
        let p = SarimaxParams {
            phi: 0.3,
            theta: -0.2,
            seasonal_phi: 0.1,
            seasonal_theta: 0.4,
            beta: 1.5,
            sigma2: 0.0,
            d: 1,
        };
        let y: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin() * 10.0).collect();
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).cos()).collect();
        let (pred, e) = one_step(&p, &y, &x);
        for k in 0..40 {
            assert!((y[k] - pred[k] - e[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_params_predict_random_walk_plus_exog() {
        let mut p = SarimaxParams::<f64>::zero();
        p.beta = 2.0;
        let y = [1.0, 4.0, 2.0];
        let x = [0.0, 1.0, 3.0];
        let (pred, _) = one_step(&p, &y, &x);
        assert_eq!(pred, vec![1.0, 1.0 + 2.0, 4.0 + 4.0]);
    }

    #[test]
    fn short_series_rejected() {
        let y = vec![1.0f64; MIN_LENGTH];
        assert!(matches!(
            fit_series(&y, &y, &SarimaxSettings::default()),
            Err(Error::TooFewRows { .. })
        ));
    }

    #[test]
    fn recovers_ar1_in_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 2000;
        let mut w = 0.0;
        let mut y = vec![0.0];
        for _ in 1..n {
            w = 0.6 * w + normal(&mut rng);
            y.push(y.last().unwrap() + w);
        }
        let x = vec![0.0; n];
        let p = fit(&y, &x);
        assert!((p.phi - 0.6).abs() < 0.1, "{p:?}");
        assert!(p.is_admissible());
    }

    #[test]
    fn recursive_matches_rolling_at_horizon_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dates: Vec<NaiveDate> = (0..60)
            .map(|i| NaiveDate::from_ymd_opt(2022, 1, 1).unwrap() + Duration::days(i))
            .collect();
        let rows = dates
            .iter()
            .map(|&date| crate::lag::LagRow {
                date,
                x_conc: 5.0 + normal(&mut rng),
                x_aqi: 0.0,
                y_future_aqi: 30.0 + 3.0 * normal(&mut rng),
            })
            .collect();
        let ds = LagDataset {
            pollutant: crate::Pollutant::Pm25,
            lag: 1,
            rows,
        };
        let mut settings = SarimaxSettings::default();
        let rolling = SarimaxModel::fit(&ds, &settings).unwrap();
        settings.forecast = SarimaxForecast::RecursiveHorizon;
        let mut recursive = rolling.clone();
        recursive.settings = settings;
        assert_eq!(rolling.predict(&ds).unwrap(), recursive.predict(&ds).unwrap());
    }
}
