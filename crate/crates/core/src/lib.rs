//! Multi-horizon daily AQI forecasting: EPA ingestion, leakage-safe lag datasets, breakpoint
//! physics, a small from-scratch neural core, six model families and a reproducible benchmark.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the `*64` / `*32` aliases
//! pin the common cases.

pub mod error;
pub mod eval;
pub mod ingest;
pub mod lag;
pub mod models;
pub mod nn;
pub mod physics;
pub mod scalar;
pub mod synthetic;

pub use error::{Error, Result};
pub use eval::{BenchmarkGrid, BenchmarkOutcome, MetricBundle, ReportFormat};
pub use ingest::{DailySeries, DateFormat, Pollutant};
pub use lag::{LagDataset, ScalerKind};
pub use models::{Family, FittedModel, ModelSpec};
pub use physics::{BreakpointTable, LossWeights};
pub use scalar::Scalar;

pub type Matrix64 = nn::Matrix<f64>;
pub type DailySeries64 = DailySeries<f64>;
pub type LagDataset64 = LagDataset<f64>;
pub type BreakpointTable64 = BreakpointTable<f64>;
pub type FittedModel64 = FittedModel<f64>;

pub type Matrix32 = nn::Matrix<f32>;
pub type DailySeries32 = DailySeries<f32>;
pub type LagDataset32 = LagDataset<f32>;
pub type BreakpointTable32 = BreakpointTable<f32>;
pub type FittedModel32 = FittedModel<f32>;
