use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::time::Instant;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::MetricBundle;
use crate::error::{Error, Result};
use crate::ingest::Pollutant;
use crate::lag::{chrono_split, LagDataset};
use crate::models::{Family, FittedModel, HyperOverrides, ModelSpec};
use crate::physics::{BreakpointTable, LossWeights};
use crate::scalar::Scalar;

/// Outer loops of the benchmark. Physics families expand over `lambda_grid`; the others run
/// once with data-only weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkGrid {
    pub pollutants: Vec<Pollutant>,
    pub lags: Vec<usize>,
    pub families: Vec<Family>,
    pub lambda_grid: Vec<LossWeights>,
    pub seeds: Vec<u64>,
}

impl BenchmarkGrid {
    pub fn standard(seed: u64) -> Self {
        BenchmarkGrid {
            pollutants: Pollutant::ALL.to_vec(),
            lags: vec![1, 7, 14, 30],
            families: Family::ALL.to_vec(),
            lambda_grid: LossWeights::standard_grid(),
            seeds: vec![seed],
        }
    }

    /// Every cell in key order.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut cells = Vec::new();
        for &pollutant in &self.pollutants {
            for &lag in &self.lags {
                for &family in &self.families {
                    let rows: &[LossWeights] = if family.is_physics() {
                        &self.lambda_grid
                    } else {
                        &[LossWeights::DATA_ONLY]
                    };
                    for &weights in rows {
                        for &seed in &self.seeds {
                            cells.push(CellKey {
                                pollutant,
                                lag,
                                family,
                                weights,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        cells.sort_by(CellKey::cmp);
        cells.dedup_by(|a, b| a.cmp(b) == Ordering::Equal);
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub pollutant: Pollutant,
    pub lag: usize,
    pub family: Family,
    pub weights: LossWeights,
    pub seed: u64,
}

impl CellKey {
    /// Pollutant, lag, family, then λ rows from physics-only to data-only, then seed.
    pub fn cmp(&self, other: &Self) -> Ordering {
        self.pollutant
            .cmp(&other.pollutant)
            .then(self.lag.cmp(&other.lag))
            .then(self.family.cmp(&other.family))
            .then(self.weights.lambda_data.total_cmp(&other.weights.lambda_data))
            .then(self.weights.lambda_phys.total_cmp(&other.weights.lambda_phys))
            .then(self.seed.cmp(&other.seed))
    }

    /// File-name-safe identifier.
    pub fn slug(&self) -> String {
        format!(
            "{}_lag{}_{}_ld{}_lp{}_seed{}",
            self.pollutant.code(),
            self.lag,
            self.family.code(),
            self.weights.lambda_data,
            self.weights.lambda_phys,
            self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub key: CellKey,
    pub train: MetricBundle,
    pub test: MetricBundle,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedCell {
    pub key: CellKey,
    pub error: String,
}

/// Test-window predictions of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub dates: Vec<NaiveDate>,
    pub truth: Vec<f64>,
    pub pred: Vec<f64>,
}

impl PlotSeries {
    pub fn write_csv<W: std::io::Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["DATE", "TRUE_AQI", "PRED_AQI"])?;
        for ((d, t), p) in self.dates.iter().zip(&self.truth).zip(&self.pred) {
            w.write_record([d.to_string(), t.to_string(), p.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("plot data", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub results: Vec<BenchmarkResult>,
    pub failures: Vec<FailedCell>,
    #[serde(skip)]
    pub plots: Vec<(CellKey, PlotSeries)>,
}

/// Datasets, tables and settings shared by every cell.
pub struct BenchmarkInputs<T> {
    pub datasets: BTreeMap<(Pollutant, usize), LagDataset<T>>,
    pub tables: BTreeMap<Pollutant, BreakpointTable<T>>,
    pub split_ratio: f64,
    pub overrides: BTreeMap<Family, HyperOverrides>,
}

/// Fits and scores a single cell; metrics are in real AQI units.
pub fn run_cell<T: Scalar>(key: &CellKey, inputs: &BenchmarkInputs<T>) -> Result<(BenchmarkResult, PlotSeries)> {
    let started = Instant::now();
    let ds = inputs
        .datasets
        .get(&(key.pollutant, key.lag))
        .ok_or_else(|| Error::InvalidSpec(format!("no lag-{} dataset for {}", key.lag, key.pollutant)))?;
    let split = chrono_split(ds, inputs.split_ratio)?;
    let mut spec = ModelSpec::new(key.family, key.seed).with_weights(key.weights);
    if let Some(o) = inputs.overrides.get(&key.family) {
        spec = spec.with_overrides(o);
    }
    let model = FittedModel::fit(&spec, &split.train, inputs.tables.get(&key.pollutant))?;
    let train_pred = model.predict(&split.train)?;
    let test_pred = model.predict(&split.test)?;
    let test_truth = split.test.targets();
    let result = BenchmarkResult {
        key: *key,
        train: MetricBundle::compute(&split.train.targets(), &train_pred)?,
        test: MetricBundle::compute(&test_truth, &test_pred)?,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    let plot = PlotSeries {
        dates: split.test.dates(),
        truth: test_truth.iter().map(|v| v.as_f64()).collect(),
        pred: test_pred.iter().map(|v| v.as_f64()).collect(),
    };
    Ok((result, plot))
}

/// Runs every grid cell on a pool of `jobs` workers (`0` = all logical CPUs). Failed cells
/// are collected rather than aborting the run; output order is the key order regardless of
/// scheduling.
pub fn run_benchmark<T: Scalar>(grid: &BenchmarkGrid, inputs: &BenchmarkInputs<T>, jobs: usize) -> BenchmarkOutcome {
    let cells = grid.cells();
    let run = || -> Vec<(CellKey, Result<(BenchmarkResult, PlotSeries)>)> {
        cells.par_iter().map(|k| (*k, run_cell(k, inputs))).collect()
    };
    let outputs = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };
    let mut outcome = BenchmarkOutcome::default();
    for (key, out) in outputs {
        match out {
            Ok((result, plot)) => {
                outcome.results.push(result);
                outcome.plots.push((key, plot));
            }
            Err(e) => outcome.failures.push(FailedCell {
                key,
                error: e.to_string(),
            }),
        }
    }
    outcome
}
