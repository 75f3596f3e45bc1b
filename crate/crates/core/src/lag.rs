//! Horizon-specific supervised datasets, chronological splitting, and train-only scalers.

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{parse_num, DailySeries, DateFormat, Pollutant};
use crate::scalar::{mean, population_variance, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagRow<T> {
    pub date: NaiveDate,
    pub x_conc: T,
    pub x_aqi: T,
    pub y_future_aqi: T,
}

/// Rows pairing day `i` features with the AQI `lag` positions later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagDataset<T> {
    pub pollutant: Pollutant,
    pub lag: usize,
    pub rows: Vec<LagRow<T>>,
}

impl<T: Scalar> LagDataset<T> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn conc(&self) -> Vec<T> {
        self.rows.iter().map(|r| r.x_conc).collect()
    }

    pub fn aqi(&self) -> Vec<T> {
        self.rows.iter().map(|r| r.x_aqi).collect()
    }

    pub fn targets(&self) -> Vec<T> {
        self.rows.iter().map(|r| r.y_future_aqi).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.rows.iter().map(|r| r.date).collect()
    }

    fn slice(&self, range: std::ops::Range<usize>) -> Self {
        LagDataset {
            pollutant: self.pollutant,
            lag: self.lag,
            rows: self.rows[range].to_vec(),
        }
    }

    pub fn target_header(&self) -> String {
        format!("Y_AQI_LAG_{}", self.lag)
    }

    /// Writes `DATE,X_CONC,X_AQI,Y_AQI_LAG_<L>`.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["DATE", "X_CONC", "X_AQI", &self.target_header()])?;
        for r in &self.rows {
            w.write_record([
                r.date.to_string(),
                r.x_conc.to_string(),
                r.x_aqi.to_string(),
                r.y_future_aqi.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<lag dataset>", e))?;
        Ok(())
    }

    /// Reads a lag file; the horizon comes from the target column header.
    pub fn read_csv<R: Read>(source: R, pollutant: Pollutant) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(source);
        let headers = reader.headers()?.clone();
        for (i, name) in ["DATE", "X_CONC", "X_AQI"].iter().enumerate() {
            if headers.get(i) != Some(*name) {
                return Err(Error::MissingColumn((*name).to_string()));
            }
        }
        let lag = headers
            .get(3)
            .and_then(|h| h.strip_prefix("Y_AQI_LAG_"))
            .and_then(|l| l.parse::<usize>().ok())
            .ok_or_else(|| Error::MissingColumn("Y_AQI_LAG_<L>".into()))?;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            rows.push(LagRow {
                date: DateFormat::Iso.parse(&record[0]).ok_or_else(|| Error::Parse {
                    what: "ISO date",
                    value: record[0].to_string(),
                })?,
                x_conc: parse_num(&record[1])?,
                x_aqi: parse_num(&record[2])?,
                y_future_aqi: parse_num(&record[3])?,
            });
        }
        Ok(LagDataset {
            pollutant,
            lag,
            rows,
        })
    }
}

/// Pairs row `i` features with row `i + lag` AQI. Indexing is positional over the cleaned
/// series, so a missing calendar day shortens the effective horizon by one.
pub fn build_lag_dataset<T: Scalar>(series: &DailySeries<T>, lag: usize) -> Result<LagDataset<T>> {
    if lag == 0 || lag >= series.len() {
        return Err(Error::InvalidLag {
            lag,
            len: series.len(),
        });
    }
    let rows = series
        .rows
        .iter()
        .zip(&series.rows[lag..])
        .map(|(now, future)| LagRow {
            date: now.date,
            x_conc: now.mean_concentration,
            x_aqi: now.mean_aqi,
            y_future_aqi: future.mean_aqi,
        })
        .collect();
    Ok(LagDataset {
        pollutant: series.pollutant,
        lag,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset<T> {
    pub train: LagDataset<T>,
    pub test: LagDataset<T>,
    pub alpha: f64,
}

impl<T: Scalar> SplitDataset<T> {
    pub fn pollutant(&self) -> Pollutant {
        self.train.pollutant
    }
}

/// Unshuffled split with boundary `floor(alpha * n)`.
pub fn chrono_split<T: Scalar>(ds: &LagDataset<T>, alpha: f64) -> Result<SplitDataset<T>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidSplitRatio(alpha));
    }
    let n = ds.len();
    let boundary = (alpha * n as f64).floor() as usize;
    if boundary == 0 || boundary >= n {
        return Err(Error::DegenerateSplit { n, alpha });
    }
    Ok(SplitDataset {
        train: ds.slice(0..boundary),
        test: ds.slice(boundary..n),
        alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScalerKind {
    Standard,
    MinMax { lo: f64, hi: f64 },
    Identity,
}

impl ScalerKind {
    pub const MINMAX_SYMMETRIC: ScalerKind = ScalerKind::MinMax { lo: -1.0, hi: 1.0 };

    fn label(self) -> &'static str {
        match self {
            ScalerKind::Standard => "standard",
            ScalerKind::MinMax { .. } => "min-max",
            ScalerKind::Identity => "identity",
        }
    }
}

/// Fitted per-column affine map `x -> x * scale + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale<T> {
    pub name: String,
    /// `mean`/`std` for Standard, `min`/`max` for MinMax, `0`/`1` for Identity.
    pub stat_a: T,
    pub stat_b: T,
    scale: T,
    offset: T,
}

impl<T: Scalar> ColumnScale<T> {
    #[inline]
    pub fn transform(&self, x: T) -> T {
        x * self.scale + self.offset
    }

    #[inline]
    pub fn inverse(&self, z: T) -> T {
        (z - self.offset) / self.scale
    }
}

/// Column-wise scaler whose statistics come only from the rows it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler<T> {
    pub kind: ScalerKind,
    pub columns: Vec<ColumnScale<T>>,
}

impl<T: Scalar> Scaler<T> {
    /// Fits one affine map per named column.
    pub fn fit(kind: ScalerKind, columns: &[(&str, &[T])]) -> Result<Self> {
        let fitted = columns
            .iter()
            .map(|(name, values)| fit_column(kind, name, values))
            .collect::<Result<Vec<_>>>()?;
        Ok(Scaler {
            kind,
            columns: fitted,
        })
    }

    pub fn column(&self, name: &str) -> Result<&ColumnScale<T>> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn transform(&self, name: &str, values: &[T]) -> Result<Vec<T>> {
        let c = self.column(name)?;
        Ok(values.iter().map(|&v| c.transform(v)).collect())
    }

    pub fn inverse(&self, name: &str, values: &[T]) -> Result<Vec<T>> {
        let c = self.column(name)?;
        Ok(values.iter().map(|&v| c.inverse(v)).collect())
    }
}

fn fit_column<T: Scalar>(kind: ScalerKind, name: &str, values: &[T]) -> Result<ColumnScale<T>> {
    if values.is_empty() {
        return Err(Error::NoSamples);
    }
    let degenerate = || Error::DegenerateColumn {
        column: name.to_string(),
        scaler: kind.label(),
    };
    let (stat_a, stat_b, scale, offset) = match kind {
        ScalerKind::Identity => (T::zero(), T::one(), T::one(), T::zero()),
        ScalerKind::Standard => {
            let m = mean(values);
            let sd = population_variance(values).sqrt();
            if !(sd > T::zero()) {
                return Err(degenerate());
            }
            (m, sd, T::one() / sd, -m / sd)
        }
        ScalerKind::MinMax { lo, hi } => {
            let min = values.iter().copied().fold(T::infinity(), T::min);
            let max = values.iter().copied().fold(T::neg_infinity(), T::max);
            if !(max > min) {
                return Err(degenerate());
            }
            let (lo, hi) = (T::of(lo), T::of(hi));
            let scale = (hi - lo) / (max - min);
            (min, max, scale, lo - min * scale)
        }
    };
    Ok(ColumnScale {
        name: name.to_string(),
        stat_a,
        stat_b,
        scale,
        offset,
    })
}
