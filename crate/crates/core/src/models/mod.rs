//! The six model families and a uniform fit/predict/checkpoint surface over them.

mod lstm;
mod mlp;
mod neldermead;
mod ols;
mod sarimax;
mod spec;
mod train;

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use self::lstm::{LstmNet, LstmNetCache};
pub use self::mlp::{MlpCache, MlpNet};
pub use self::neldermead::{Minimum, NelderMead};
pub use self::ols::{least_squares, OlsModel};
pub use self::sarimax::{css, fit_series, one_step, SarimaxModel, SarimaxParams, SeriesFit, MIN_LENGTH, PERIOD};
pub use self::spec::{Family, HyperOverrides, Hyperparams, ModelSpec, SarimaxForecast, SarimaxSettings};
pub use self::train::{train, EpochRecord, Network, TrainingData, TrainingHistory};

use crate::error::{Error, Result};
use crate::ingest::Pollutant;
use crate::lag::{LagDataset, Scaler};
use crate::nn::{Dropout, Matrix};
use crate::physics::BreakpointTable;
use crate::scalar::Scalar;

pub const CONC: &str = "X_CONC";
pub const AQI: &str = "X_AQI";
pub const TARGET: &str = "Y_AQI";

/// Family-specific learned state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learned<T> {
    Ols(OlsModel<T>),
    Sarimax(SarimaxModel<T>),
    Mlp {
        net: MlpNet<T>,
        features: Scaler<T>,
    },
    Lstm {
        net: LstmNet<T>,
        features: Scaler<T>,
        target: Scaler<T>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel<T> {
    pub spec: ModelSpec,
    pub pollutant: Pollutant,
    pub lag: usize,
    pub learned: Learned<T>,
    pub history: TrainingHistory,
}

fn features<T: Scalar>(scaler: &Scaler<T>, rows: &LagDataset<T>) -> Result<Matrix<T>> {
    let conc = scaler.transform(CONC, &rows.conc())?;
    let aqi = scaler.transform(AQI, &rows.aqi())?;
    Matrix::from_columns(&[&conc, &aqi])
}

impl<T: Scalar> FittedModel<T> {
    /// Fits `spec` on `train` only. Physics families need the pollutant's breakpoint table.
    pub fn fit(spec: &ModelSpec, train: &LagDataset<T>, table: Option<&BreakpointTable<T>>) -> Result<Self> {
        spec.validate()?;
        if train.len() < 3 {
            return Err(Error::TooFewRows { min: 2, got: train.len() });
        }
        let table = if spec.family.is_physics() {
            let t = table.ok_or(Error::MissingBreakpointTable(train.pollutant))?;
            if t.pollutant != train.pollutant {
                return Err(Error::MissingBreakpointTable(train.pollutant));
            }
            Some(t)
        } else {
            None
        };
        let h = &spec.hyper;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut history = TrainingHistory::default();
        let learned = match spec.family.baseline() {
            Family::Lr => Learned::Ols(OlsModel::fit(train)?),
            Family::Sarimax => Learned::Sarimax(SarimaxModel::fit(train, &h.sarimax)?),
            Family::Mlp => {
                let conc = train.conc();
                let scaler = Scaler::fit(h.scaler, &[(CONC, &conc), (AQI, &train.aqi())])?;
                let x = features(&scaler, train)?;
                let y = train.targets();
                let reference = table.map(|t| t.reference(&conc, None)).transpose()?;
                let mut net = MlpNet::new(2, &h.hidden, &mut rng);
                history = train::train(
                    &mut net,
                    TrainingData {
                        x: &x,
                        y: &y,
                        reference: reference.as_deref(),
                    },
                    h,
                    spec.weights,
                    &mut rng,
                )?;
                Learned::Mlp { net, features: scaler }
            }
            _ => {
                let conc = train.conc();
                let scaler = Scaler::fit(h.scaler, &[(CONC, &conc), (AQI, &train.aqi())])?;
                let raw_y = train.targets();
                let target = Scaler::fit(h.scaler, &[(TARGET, &raw_y)])?;
                let x = features(&scaler, train)?;
                let y = target.transform(TARGET, &raw_y)?;
                let reference = table
                    .map(|t| t.reference(&conc, Some(target.column(TARGET)?)))
                    .transpose()?;
                let mut net = LstmNet::new(
                    2,
                    h.lstm_hidden,
                    h.lstm_layers,
                    &h.hidden,
                    Dropout::new(h.dropout)?,
                    &mut rng,
                );
                history = train::train(
                    &mut net,
                    TrainingData {
                        x: &x,
                        y: &y,
                        reference: reference.as_deref(),
                    },
                    h,
                    spec.weights,
                    &mut rng,
                )?;
                Learned::Lstm {
                    net,
                    features: scaler,
                    target,
                }
            }
        };
        Ok(FittedModel {
            spec: spec.clone(),
            pollutant: train.pollutant,
            lag: train.lag,
            learned,
            history,
        })
    }

    /// Predictions in real AQI units, one per row.
    pub fn predict(&self, rows: &LagDataset<T>) -> Result<Vec<T>> {
        if rows.pollutant != self.pollutant {
            return Err(Error::ModelPollutant {
                expected: self.pollutant,
                found: rows.pollutant,
            });
        }
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let pred = match &self.learned {
            Learned::Ols(m) => m.predict(rows),
            Learned::Sarimax(m) => m.predict(rows)?,
            Learned::Mlp { net, features: f } => net.predict(&features(f, rows)?)?,
            Learned::Lstm {
                net,
                features: f,
                target,
            } => target.inverse(TARGET, &net.predict(&features(f, rows)?)?)?,
        };
        if pred.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{} predictions", self.spec.family)));
        }
        Ok(pred)
    }

    pub fn save_json<W: Write>(&self, sink: W) -> Result<()> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            scalar: scalar_name::<T>().to_string(),
            model: self.clone(),
        };
        serde_json::to_writer_pretty(sink, &ck)?;
        Ok(())
    }

    pub fn load_json<R: Read>(source: R) -> Result<Self> {
        let ck: Checkpoint<T> = serde_json::from_reader(source)?;
        if ck.format != CHECKPOINT_FORMAT || ck.scalar != scalar_name::<T>() {
            return Err(Error::InvalidSpec(format!(
                "checkpoint is `{}` over {}, expected `{CHECKPOINT_FORMAT}` over {}",
                ck.format,
                ck.scalar,
                scalar_name::<T>()
            )));
        }
        ck.model.spec.validate()?;
        Ok(ck.model)
    }
}

const CHECKPOINT_FORMAT: &str = "aqi-forecast/fitted-model";

fn scalar_name<T: 'static>() -> &'static str {
    std::any::type_name::<T>()
}

#[derive(Serialize, Deserialize)]
struct Checkpoint<T> {
    format: String,
    version: String,
    scalar: String,
    model: FittedModel<T>,
}
