use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lag::ScalerKind;
use crate::nn::OptimizerKind;
use crate::physics::LossWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "SARIMAX")]
    Sarimax,
    #[serde(rename = "MLP")]
    Mlp,
    #[serde(rename = "MLP_PHYS")]
    MlpPhys,
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "LSTM_PHYS")]
    LstmPhys,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Lr,
        Family::Sarimax,
        Family::Mlp,
        Family::MlpPhys,
        Family::Lstm,
        Family::LstmPhys,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Family::Lr => "LR",
            Family::Sarimax => "SARIMAX",
            Family::Mlp => "MLP",
            Family::MlpPhys => "MLP_PHYS",
            Family::Lstm => "LSTM",
            Family::LstmPhys => "LSTM_PHYS",
        }
    }

    /// Label used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Family::Lr => "LR",
            Family::Sarimax => "SARIMAX",
            Family::Mlp => "MLP",
            Family::MlpPhys => "MLP+Physics",
            Family::Lstm => "LSTM",
            Family::LstmPhys => "LSTM+Physics",
        }
    }

    pub fn is_physics(self) -> bool {
        matches!(self, Family::MlpPhys | Family::LstmPhys)
    }

    /// The data-only family a physics variant mirrors (itself otherwise).
    pub fn baseline(self) -> Family {
        match self {
            Family::MlpPhys => Family::Mlp,
            Family::LstmPhys => Family::Lstm,
            f => f,
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self.baseline(), Family::Mlp | Family::Lstm)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace(['+', '-'], "_");
        match norm.as_str() {
            "LR" | "OLS" => Ok(Family::Lr),
            "SARIMAX" => Ok(Family::Sarimax),
            "MLP" => Ok(Family::Mlp),
            "MLP_PHYS" | "MLP_PHYSICS" => Ok(Family::MlpPhys),
            "LSTM" => Ok(Family::Lstm),
            "LSTM_PHYS" | "LSTM_PHYSICS" => Ok(Family::LstmPhys),
            _ => Err(Error::Parse {
                what: "model family",
                value: s.to_string(),
            }),
        }
    }
}

/// How SARIMAX fills the test window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SarimaxForecast {
    /// One-step-ahead predictions of the target column, conditioning on all earlier rows.
    #[default]
    RollingOneStep,
    /// `lag`-step recursive forecasts that only condition on rows at least `lag` positions back.
    RecursiveHorizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarimaxSettings {
    pub forecast: SarimaxForecast,
    /// Standardize the exogenous regressor with train statistics before fitting.
    pub scale_exog: bool,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for SarimaxSettings {
    fn default() -> Self {
        SarimaxSettings {
            forecast: SarimaxForecast::RollingOneStep,
            scale_exog: false,
            max_iterations: 20_000,
            tolerance: 1e-10,
        }
    }
}

/// Per-family training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub scaler: ScalerKind,
    /// Whether targets are scaled too (LSTM) or kept in AQI units (MLP).
    pub scale_target: bool,
    pub epochs: usize,
    /// Dense widths: MLP hidden layers, or the LSTM head.
    pub hidden: Vec<usize>,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub dropout: f64,
    /// Validation carve-out from the end of the training split; `0` disables
    /// scheduling and early stopping.
    pub validation_fraction: f64,
    pub early_stopping_patience: usize,
    pub scheduler_patience: usize,
    pub scheduler_factor: f64,
    pub min_delta: f64,
    pub sarimax: SarimaxSettings,
}

impl Hyperparams {
    pub fn for_family(family: Family) -> Self {
        let base = Hyperparams {
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.001,
            weight_decay: 0.0,
            batch_size: None,
            scaler: ScalerKind::Identity,
            scale_target: false,
            epochs: 0,
            hidden: Vec::new(),
            lstm_hidden: 0,
            lstm_layers: 0,
            dropout: 0.0,
            validation_fraction: 0.0,
            early_stopping_patience: 20,
            scheduler_patience: 10,
            scheduler_factor: 0.5,
            min_delta: 1e-6,
            sarimax: SarimaxSettings::default(),
        };
        match family.baseline() {
            Family::Lr | Family::Sarimax => base,
            // MLP+Physics shares the baseline optimizer so that λ = (1, 0) reduces exactly
            Family::Mlp => Hyperparams {
                optimizer: OptimizerKind::AdamW,
                weight_decay: 0.01,
                scaler: ScalerKind::Standard,
                epochs: 500,
                hidden: vec![64, 32],
                ..base
            },
            _ => Hyperparams {
                batch_size: Some(32),
                scaler: ScalerKind::MINMAX_SYMMETRIC,
                scale_target: true,
                epochs: 1000,
                hidden: vec![128, 64, 32],
                lstm_hidden: 32,
                lstm_layers: 2,
                dropout: 0.1,
                validation_fraction: 0.1,
                ..base
            },
        }
    }

    pub fn apply(mut self, o: &HyperOverrides) -> Self {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = o.$field.clone() {
                    self.$field = v;
                }
            )*};
        }
        set!(
            optimizer,
            learning_rate,
            weight_decay,
            scale_target,
            epochs,
            hidden,
            lstm_hidden,
            lstm_layers,
            dropout,
            validation_fraction,
            early_stopping_patience,
            scheduler_patience,
            scheduler_factor,
            min_delta
        );
        if let Some(b) = o.batch_size {
            self.batch_size = if b == 0 { None } else { Some(b) };
        }
        if let Some(f) = o.sarimax_forecast {
            self.sarimax.forecast = f;
        }
        if let Some(s) = o.sarimax_scale_exog {
            self.sarimax.scale_exog = s;
        }
        if let Some(m) = o.sarimax_max_iterations {
            self.sarimax.max_iterations = m;
        }
        self
    }
}

/// Optional per-family overrides, as read from a config file. `batch_size = 0` means full batch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperOverrides {
    pub optimizer: Option<OptimizerKind>,
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub batch_size: Option<usize>,
    pub scale_target: Option<bool>,
    pub epochs: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub lstm_hidden: Option<usize>,
    pub lstm_layers: Option<usize>,
    pub dropout: Option<f64>,
    pub validation_fraction: Option<f64>,
    pub early_stopping_patience: Option<usize>,
    pub scheduler_patience: Option<usize>,
    pub scheduler_factor: Option<f64>,
    pub min_delta: Option<f64>,
    pub sarimax_forecast: Option<SarimaxForecast>,
    pub sarimax_scale_exog: Option<bool>,
    pub sarimax_max_iterations: Option<usize>,
}

/// Family, settings, loss weights and seed: everything that determines a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub hyper: Hyperparams,
    pub weights: LossWeights,
    pub seed: u64,
}

impl ModelSpec {
    /// Table defaults for `family`, data-only loss.
    pub fn new(family: Family, seed: u64) -> Self {
        ModelSpec {
            family,
            hyper: Hyperparams::for_family(family),
            weights: LossWeights::DATA_ONLY,
            seed,
        }
    }

    pub fn with_weights(mut self, weights: LossWeights) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_overrides(mut self, o: &HyperOverrides) -> Self {
        self.hyper = self.hyper.apply(o);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.hyper;
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if !self.family.is_physics() && self.weights != LossWeights::DATA_ONLY {
            return bad(format!(
                "{} is data-only; loss weights must be (1, 0), got ({}, {})",
                self.family, self.weights.lambda_data, self.weights.lambda_phys
            ));
        }
        LossWeights::new(self.weights.lambda_data, self.weights.lambda_phys)?;
        if h.scaler != Hyperparams::for_family(self.family).scaler {
            return bad(format!("{} requires its table scaler, got {:?}", self.family, h.scaler));
        }
        if self.family.is_neural() {
            if !(h.learning_rate > 0.0 && h.learning_rate.is_finite()) {
                return bad(format!("learning rate {}", h.learning_rate));
            }
            if h.weight_decay < 0.0 {
                return bad(format!("weight decay {}", h.weight_decay));
            }
            if h.epochs == 0 {
                return bad("epochs must be positive".into());
            }
            if h.hidden.contains(&0) || h.batch_size == Some(0) {
                return bad("zero-width layer or batch".into());
            }
            if !(0.0..1.0).contains(&h.dropout) {
                return Err(Error::DropoutRate(h.dropout));
            }
            if !(0.0..1.0).contains(&h.validation_fraction) {
                return bad(format!("validation fraction {}", h.validation_fraction));
            }
            if !(h.scheduler_factor > 0.0 && h.scheduler_factor <= 1.0) {
                return bad(format!("scheduler factor {}", h.scheduler_factor));
            }
        }
        if self.family.baseline() == Family::Lstm && (h.lstm_hidden == 0 || h.lstm_layers == 0) {
            return bad("LSTM needs at least one layer of positive width".into());
        }
        Ok(())
    }
}
