//! EPA daily export ingestion: parse per-station rows, average stations per day,
//! and stitch yearly files into one multi-year daily series.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{mean, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pollutant {
    #[serde(rename = "PM25")]
    Pm25,
    #[serde(rename = "O3")]
    O3,
}

impl Pollutant {
    pub const ALL: [Pollutant; 2] = [Pollutant::Pm25, Pollutant::O3];

    pub fn code(self) -> &'static str {
        match self {
            Pollutant::Pm25 => "PM25",
            Pollutant::O3 => "O3",
        }
    }
}

impl fmt::Display for Pollutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Pollutant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace(['.', '_'], "").as_str() {
            "PM25" => Ok(Pollutant::Pm25),
            "O3" | "OZONE" => Ok(Pollutant::O3),
            _ => Err(Error::Parse {
                what: "pollutant",
                value: s.to_string(),
            }),
        }
    }
}

/// How the date column of a raw file is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DateFormat {
    /// `/`-separated dates are month-first, `YYYY-MM-DD` is ISO, other `-` forms are day-first.
    #[default]
    Auto,
    /// `MM/DD/YYYY`
    Mdy,
    /// `DD-MM-YYYY` or `DD-MM-YY`
    Dmy,
    /// `YYYY-MM-DD`
    Iso,
}

impl DateFormat {
    pub fn parse(self, raw: &str) -> Option<NaiveDate> {
        let s = raw.trim();
        let try_fmt = |f: &str| NaiveDate::parse_from_str(s, f).ok();
        match self {
            DateFormat::Mdy => try_fmt("%m/%d/%Y"),
            DateFormat::Dmy => try_fmt("%d-%m-%Y").filter(|d| d.year_ce().1 >= 1000).or_else(|| {
                // two-digit years map to 20YY
                try_fmt("%d-%m-%y")
            }),
            DateFormat::Iso => try_fmt("%Y-%m-%d"),
            DateFormat::Auto => {
                if s.contains('/') {
                    DateFormat::Mdy.parse(s)
                } else if s.len() >= 5 && s.as_bytes()[4] == b'-' {
                    DateFormat::Iso.parse(s)
                } else {
                    DateFormat::Dmy.parse(s)
                }
            }
        }
    }
}

/// Header names of the four columns the pipeline reads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub date: String,
    pub station: String,
    pub concentration: String,
    pub aqi: String,
}

impl ColumnMap {
    /// Column names of the EPA "Outdoor Air Quality Data / Download Daily Data" export.
    pub fn epa_default(pollutant: Pollutant) -> Self {
        let concentration = match pollutant {
            Pollutant::Pm25 => "Daily Mean PM2.5 Concentration",
            Pollutant::O3 => "Daily Max 8-hour Ozone Concentration",
        };
        ColumnMap {
            date: "Date".into(),
            station: "Site ID".into(),
            concentration: concentration.into(),
            aqi: "Daily AQI Value".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawObservation<T> {
    pub date: NaiveDate,
    pub station_id: String,
    pub concentration: T,
    pub aqi: T,
}

/// Observations kept from one file, with the number of rows dropped as incomplete.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFile<T> {
    pub observations: Vec<RawObservation<T>>,
    pub dropped: usize,
}

/// Parses one EPA daily CSV export.
///
/// Rows with an unparseable date, a blank or non-numeric concentration/AQI, a negative
/// concentration, or an AQI outside `[0, 500]` are dropped and counted.
pub fn parse_epa_daily_csv<T: Scalar, R: Read>(
    source: R,
    columns: &ColumnMap,
    date_format: DateFormat,
) -> Result<ParsedFile<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let date_idx = find(&columns.date)?;
    let station_idx = find(&columns.station)?;
    let conc_idx = find(&columns.concentration)?;
    let aqi_idx = find(&columns.aqi)?;

    let mut observations = Vec::new();
    let mut dropped = 0usize;
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record?;
        rows += 1;
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let parsed = (|| {
            let date = date_format.parse(field(date_idx))?;
            let concentration: T = field(conc_idx).parse().ok()?;
            let aqi: T = field(aqi_idx).parse().ok()?;
            let valid = concentration.is_finite()
                && concentration >= T::zero()
                && aqi.is_finite()
                && aqi >= T::zero()
                && aqi <= T::of(500.0);
            valid.then(|| RawObservation {
                date,
                station_id: field(station_idx).to_string(),
                concentration,
                aqi,
            })
        })();
        match parsed {
            Some(obs) => observations.push(obs),
            None => dropped += 1,
        }
    }
    if rows == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(ParsedFile {
        observations,
        dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyRow<T> {
    pub date: NaiveDate,
    pub mean_concentration: T,
    pub mean_aqi: T,
}

/// City-level daily means, strictly increasing in date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries<T> {
    pub pollutant: Pollutant,
    pub rows: Vec<DailyRow<T>>,
}

impl<T: Scalar> DailySeries<T> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Writes the canonical `DATE,DAILY_MEAN,DAILY_AQI` file.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["DATE", "DAILY_MEAN", "DAILY_AQI"])?;
        for r in &self.rows {
            w.write_record([
                r.date.to_string(),
                r.mean_concentration.to_string(),
                r.mean_aqi.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<series>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R, pollutant: Pollutant) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(source);
        let headers = reader.headers()?.clone();
        for (i, name) in ["DATE", "DAILY_MEAN", "DAILY_AQI"].iter().enumerate() {
            if headers.get(i) != Some(*name) {
                return Err(Error::MissingColumn((*name).to_string()));
            }
        }
        let mut rows: Vec<DailyRow<T>> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let date = DateFormat::Iso.parse(&record[0]).ok_or_else(|| Error::Parse {
                what: "ISO date",
                value: record[0].to_string(),
            })?;
            rows.push(DailyRow {
                date,
                mean_concentration: parse_num(&record[1])?,
                mean_aqi: parse_num(&record[2])?,
            });
        }
        let dups: Vec<NaiveDate> = rows
            .windows(2)
            .filter(|w| w[0].date >= w[1].date)
            .map(|w| w[1].date)
            .collect();
        if !dups.is_empty() {
            return Err(Error::DuplicateDates(dups));
        }
        Ok(DailySeries { pollutant, rows })
    }
}

pub(crate) fn parse_num<T: Scalar>(s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse {
        what: "number",
        value: s.to_string(),
    })
}

/// Averages stations per date. Duplicate (date, station) rows are averaged first so a
/// station with several monitors counts once.
pub fn aggregate_daily_mean<T: Scalar>(
    observations: &[RawObservation<T>],
    pollutant: Pollutant,
) -> DailySeries<T> {
    let mut by_station: BTreeMap<(NaiveDate, &str), (Vec<T>, Vec<T>)> = BTreeMap::new();
    for obs in observations {
        let e = by_station
            .entry((obs.date, obs.station_id.as_str()))
            .or_default();
        e.0.push(obs.concentration);
        e.1.push(obs.aqi);
    }
    let mut by_date: BTreeMap<NaiveDate, (Vec<T>, Vec<T>)> = BTreeMap::new();
    for ((date, _), (conc, aqi)) in by_station {
        let e = by_date.entry(date).or_default();
        e.0.push(mean(&conc));
        e.1.push(mean(&aqi));
    }
    let rows = by_date
        .into_iter()
        .map(|(date, (conc, aqi))| DailyRow {
            date,
            mean_concentration: mean(&conc),
            mean_aqi: mean(&aqi),
        })
        .collect();
    DailySeries { pollutant, rows }
}

/// Concatenates yearly series into one date-sorted series. Any date present in more than
/// one input is an error.
pub fn merge_years<T: Scalar>(series: &[DailySeries<T>]) -> Result<DailySeries<T>> {
    let pollutant = series.first().ok_or(Error::EmptySeries)?.pollutant;
    let mut merged: BTreeMap<NaiveDate, DailyRow<T>> = BTreeMap::new();
    let mut collisions = Vec::new();
    for s in series {
        if s.pollutant != pollutant {
            return Err(Error::PollutantMismatch {
                expected: pollutant,
                found: s.pollutant,
            });
        }
        for row in &s.rows {
            if merged.insert(row.date, *row).is_some() {
                collisions.push(row.date);
            }
        }
    }
    if !collisions.is_empty() {
        collisions.sort();
        collisions.dedup();
        return Err(Error::DuplicateDates(collisions));
    }
    Ok(DailySeries {
        pollutant,
        rows: merged.into_values().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats<T> {
    pub min: T,
    pub max: T,
    pub mean: T,
    /// Population standard deviation.
    pub std: T,
}

impl<T: Scalar> ColumnStats<T> {
    fn of(values: &[T]) -> Self {
        let min = values.iter().copied().fold(T::infinity(), T::min);
        let max = values.iter().copied().fold(T::neg_infinity(), T::max);
        ColumnStats {
            min,
            max,
            mean: mean(values),
            std: crate::scalar::population_variance(values).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats<T> {
    pub pollutant: Pollutant,
    pub n: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub aqi: ColumnStats<T>,
    pub concentration: ColumnStats<T>,
}

pub fn series_summary<T: Scalar>(series: &DailySeries<T>) -> Result<SummaryStats<T>> {
    let first = series.rows.first().ok_or(Error::EmptySeries)?;
    let last = series.rows.last().ok_or(Error::EmptySeries)?;
    let aqi: Vec<T> = series.rows.iter().map(|r| r.mean_aqi).collect();
    let conc: Vec<T> = series.rows.iter().map(|r| r.mean_concentration).collect();
    Ok(SummaryStats {
        pollutant: series.pollutant,
        n: series.rows.len(),
        first_date: first.date,
        last_date: last.date,
        aqi: ColumnStats::of(&aqi),
        concentration: ColumnStats::of(&conc),
    })
}
