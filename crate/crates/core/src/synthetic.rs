//! Seeded synthetic stand-ins for EPA daily exports, for tests, demos and smoke runs.
//!
//! Concentrations follow a log-AR(1) with a weekly cycle; AQI values are the breakpoint AQI of
//! the station's concentration rounded to an integer, as EPA reports them.

use std::fmt::Write as _;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{ColumnMap, DailyRow, DailySeries, Pollutant};
use crate::physics::BreakpointTable;

/// Box–Muller standard normal draw.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `(median concentration, log-sd, decimals reported)` per pollutant.
fn profile(p: Pollutant) -> (f64, f64, i32) {
    match p {
        Pollutant::Pm25 => (8.5, 0.35, 1),
        Pollutant::O3 => (0.040, 0.30, 3),
    }
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (v * s).round() / s
}

/// Latent city-level log-concentration anomalies, one per day.
fn latent(days: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut z = 0.0;
    (0..days)
        .map(|d| {
            z = 0.7 * z + 0.7 * standard_normal(rng);
            let weekly = 0.15 * (std::f64::consts::TAU * d as f64 / 7.0).sin();
            z * 0.5 + weekly
        })
        .collect()
}

/// A station-averaged daily series starting at `start`.
pub fn synthetic_series(pollutant: Pollutant, start: NaiveDate, days: usize, seed: u64) -> DailySeries<f64> {
    let table = BreakpointTable::<f64>::epa_default(pollutant);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (median, sd, decimals) = profile(pollutant);
    let rows = latent(days, &mut rng)
        .into_iter()
        .enumerate()
        .map(|(d, z)| {
            let conc = round_to(median * (sd * z * 2.0).exp(), decimals + 1);
            let aqi = table.compute_aqi(conc).expect("non-negative").round();
            DailyRow {
                date: start + Duration::days(d as i64),
                mean_concentration: conc,
                mean_aqi: aqi,
            }
        })
        .collect();
    DailySeries { pollutant, rows }
}

/// One calendar year of an EPA-style daily export with `stations` monitors, using the default
/// EPA column names and `MM/DD/YYYY` dates. Every `skip_every`-th station-day is omitted and
/// one row per file has a blank concentration.
pub fn synthetic_epa_csv(pollutant: Pollutant, year: i32, stations: usize, seed: u64) -> String {
    let table = BreakpointTable::<f64>::epa_default(pollutant);
    let cols = ColumnMap::epa_default(pollutant);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (year as u64).wrapping_mul(0x9E37_79B9));
    let start = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
    let end = NaiveDate::from_ymd_opt(year + 1, 1, 1).expect("valid year");
    let days = (end - start).num_days() as usize;
    let (median, sd, decimals) = profile(pollutant);
    let skip_every = 37;

    let mut out = String::new();
    writeln!(
        out,
        "{},Source,{},POC,{},Units,{},Local Site Name",
        cols.date, cols.station, cols.concentration, cols.aqi
    )
    .expect("writing to a String");
    let mut k = 0usize;
    for (d, z) in latent(days, &mut rng).into_iter().enumerate() {
        let date = start + Duration::days(d as i64);
        for s in 0..stations {
            k += 1;
            if k % skip_every == 0 {
                continue;
            }
            let noise = 0.15 * standard_normal(&mut rng);
            let conc = round_to(median * (sd * (z * 2.0 + noise)).exp(), decimals);
            let aqi = table.compute_aqi(conc).expect("non-negative").round();
            let conc_field = if d == 100 && s == 0 {
                String::new()
            } else {
                format!("{conc:.*}", decimals as usize)
            };
            writeln!(
                out,
                "{},AQS,48113{:04},1,{},{},{},Station {}",
                date.format("%m/%d/%Y"),
                69 + s,
                conc_field,
                if pollutant == Pollutant::Pm25 { "ug/m3 LC" } else { "ppm" },
                aqi,
                s + 1
            )
            .expect("writing to a String");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_epa_daily_csv;
    use crate::ingest::DateFormat;

    #[test]
    fn normal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..200_000).map(|_| standard_normal(&mut rng)).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(m.abs() < 0.01 && (v - 1.0).abs() < 0.02, "{m} {v}");
    }

    #[test]
    fn export_parses_with_default_columns() {
        let csv = synthetic_epa_csv(Pollutant::Pm25, 2023, 3, 1);
        let parsed = parse_epa_daily_csv::<f64, _>(csv.as_bytes(), &ColumnMap::epa_default(Pollutant::Pm25), DateFormat::Mdy)
            .unwrap();
        assert_eq!(parsed.dropped, 1);
        assert!(parsed.observations.len() > 365 * 3 - 40);
    }

    #[test]
    fn series_is_seed_deterministic() {
        let start = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
        let a = synthetic_series(Pollutant::O3, start, 50, 9);
        assert_eq!(a, synthetic_series(Pollutant::O3, start, 50, 9));
        assert_ne!(a, synthetic_series(Pollutant::O3, start, 50, 10));
        assert!(a.rows.iter().all(|r| r.mean_aqi >= 0.0 && r.mean_aqi <= 500.0));
    }
}
