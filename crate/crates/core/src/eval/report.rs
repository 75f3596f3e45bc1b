use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::benchmark::{BenchmarkGrid, BenchmarkOutcome, BenchmarkResult, CellKey, FailedCell};
use super::metrics::MetricBundle;
use crate::error::{Error, Result};
use crate::ingest::Pollutant;
use crate::models::{Family, HyperOverrides};
use crate::physics::LossWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

/// Renders results and failures. Wall times are deliberately left out so that reports are a
/// pure function of the grid, data and seeds.
pub fn emit_report(outcome: &BenchmarkOutcome, format: ReportFormat) -> Result<String> {
    if outcome.results.is_empty() && outcome.failures.is_empty() {
        return Err(Error::NoResults);
    }
    Ok(match format {
        ReportFormat::Csv => csv_report(outcome),
        ReportFormat::Markdown => markdown_report(outcome),
    })
}

const METRICS: [&str; 5] = ["mae", "mse", "rmse", "nmse", "r2"];

fn metric_values(m: &MetricBundle) -> [f64; 5] {
    [m.mae, m.mse, m.rmse, m.nmse, m.r2]
}

fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = ["pollutant", "lag", "family", "lambda_data", "lambda_phys", "seed", "status"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for split in ["train", "test"] {
        h.extend(METRICS.iter().map(|m| format!("{split}_{m}")));
    }
    h.push("error".into());
    h
}

fn key_fields(k: &CellKey) -> Vec<String> {
    vec![
        k.pollutant.code().to_string(),
        k.lag.to_string(),
        k.family.code().to_string(),
        k.weights.lambda_data.to_string(),
        k.weights.lambda_phys.to_string(),
        k.seed.to_string(),
    ]
}

fn csv_report(outcome: &BenchmarkOutcome) -> String {
    let mut rows: Vec<(CellKey, Vec<String>)> = Vec::new();
    for r in &outcome.results {
        let mut f = key_fields(&r.key);
        f.push("ok".into());
        for m in [&r.train, &r.test] {
            f.extend(metric_values(m).iter().map(|v| v.to_string()));
        }
        f.push(String::new());
        rows.push((r.key, f));
    }
    for fc in &outcome.failures {
        let mut f = key_fields(&fc.key);
        f.push("failed".into());
        f.extend(std::iter::repeat(String::new()).take(2 * METRICS.len()));
        f.push(fc.error.clone());
        rows.push((fc.key, f));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let write = |w: &mut csv::Writer<Vec<u8>>, rec: &[String]| w.write_record(rec).expect("in-memory CSV");
    write(&mut w, &csv_header());
    for (_, f) in &rows {
        write(&mut w, f);
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("CSV fields are UTF-8")
}

/// Parses a CSV report back; wall times read as zero.
pub fn read_results_csv<R: Read>(source: R) -> Result<BenchmarkOutcome> {
    let mut reader = csv::Reader::from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let expected = csv_header();
    if let Some(missing) = expected.iter().find(|c| !header.contains(c)) {
        return Err(Error::MissingColumn(missing.clone()));
    }
    let col = |name: &str| header.iter().position(|h| h == name).expect("checked above");
    let num = |rec: &csv::StringRecord, name: &str| -> Result<f64> {
        let v = rec.get(col(name)).unwrap_or("");
        v.parse().map_err(|_| Error::Parse {
            what: "report number",
            value: v.to_string(),
        })
    };
    let mut outcome = BenchmarkOutcome::default();
    for rec in reader.records() {
        let rec = rec?;
        let field = |name: &str| rec.get(col(name)).unwrap_or("").to_string();
        let key = CellKey {
            pollutant: field("pollutant").parse()?,
            lag: num(&rec, "lag")? as usize,
            family: field("family").parse()?,
            weights: LossWeights::new(num(&rec, "lambda_data")?, num(&rec, "lambda_phys")?)?,
            seed: field("seed").parse().map_err(|_| Error::Parse {
                what: "seed",
                value: field("seed"),
            })?,
        };
        if field("status") == "ok" {
            let bundle = |split: &str| -> Result<MetricBundle> {
                Ok(MetricBundle {
                    mae: num(&rec, &format!("{split}_mae"))?,
                    mse: num(&rec, &format!("{split}_mse"))?,
                    rmse: num(&rec, &format!("{split}_rmse"))?,
                    nmse: num(&rec, &format!("{split}_nmse"))?,
                    r2: num(&rec, &format!("{split}_r2"))?,
                })
            };
            outcome.results.push(BenchmarkResult {
                key,
                train: bundle("train")?,
                test: bundle("test")?,
                wall_time_secs: 0.0,
            });
        } else {
            outcome.failures.push(FailedCell {
                key,
                error: field("error"),
            });
        }
    }
    Ok(outcome)
}

/// `0` → `0.0`, `0.3` → `0.3`.
fn lambda(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.1}")
    } else {
        v.to_string()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct RowKey {
    family: Family,
    lambda_data: u64,
    lambda_phys: u64,
    seed: u64,
}

fn markdown_report(outcome: &BenchmarkOutcome) -> String {
    let mut out = String::from("# AQI forecasting benchmark\n\nTest-set errors in AQI units.\n");
    let pollutants: BTreeSet<Pollutant> = outcome
        .results
        .iter()
        .map(|r| r.key.pollutant)
        .chain(outcome.failures.iter().map(|f| f.key.pollutant))
        .collect();

    for p in pollutants {
        let results: Vec<&BenchmarkResult> = outcome.results.iter().filter(|r| r.key.pollutant == p).collect();
        let failed: Vec<&FailedCell> = outcome.failures.iter().filter(|f| f.key.pollutant == p).collect();
        let keys = results.iter().map(|r| r.key).chain(failed.iter().map(|f| f.key));
        let lags: BTreeSet<usize> = keys.clone().map(|k| k.lag).collect();
        let seeds: BTreeSet<u64> = keys.clone().map(|k| k.seed).collect();
        let families: BTreeSet<Family> = keys.map(|k| k.family).collect();

        let _ = write!(out, "\n## {}\n", p.code());
        let baselines: Vec<Family> = families.iter().copied().filter(|f| !f.is_physics()).collect();
        if !baselines.is_empty() {
            out.push_str("\n### Baselines\n\n");
            table(&mut out, &results, &failed, &lags, &seeds, &baselines, false);
        }
        for f in families.iter().copied().filter(|f| f.is_physics()) {
            let _ = write!(out, "\n### {}\n\n", f.display_name());
            table(&mut out, &results, &failed, &lags, &seeds, &[f], true);
        }
    }

    if !outcome.failures.is_empty() {
        out.push_str("\n## Failed cells\n\n");
        let mut failed: Vec<&FailedCell> = outcome.failures.iter().collect();
        failed.sort_by(|a, b| a.key.cmp(&b.key));
        for f in failed {
            let k = f.key;
            let _ = writeln!(
                out,
                "- {} lag {} {} λ=({}, {}) seed {}: {}",
                k.pollutant.code(),
                k.lag,
                k.family.display_name(),
                lambda(k.weights.lambda_data),
                lambda(k.weights.lambda_phys),
                k.seed,
                f.error.replace('\n', " ")
            );
        }
    }
    out
}

fn table(
    out: &mut String,
    results: &[&BenchmarkResult],
    failed: &[&FailedCell],
    lags: &BTreeSet<usize>,
    seeds: &BTreeSet<u64>,
    families: &[Family],
    with_lambda: bool,
) {
    enum Cell<'a> {
        Ok(&'a MetricBundle),
        Failed,
    }
    let row_key = |k: &CellKey| RowKey {
        family: k.family,
        // bit patterns order non-negative floats correctly
        lambda_data: k.weights.lambda_data.to_bits(),
        lambda_phys: k.weights.lambda_phys.to_bits(),
        seed: k.seed,
    };
    let mut grid: BTreeMap<RowKey, (CellKey, BTreeMap<usize, Cell>)> = BTreeMap::new();
    for r in results.iter().filter(|r| families.contains(&r.key.family)) {
        grid.entry(row_key(&r.key))
            .or_insert_with(|| (r.key, BTreeMap::new()))
            .1
            .insert(r.key.lag, Cell::Ok(&r.test));
    }
    for f in failed.iter().filter(|f| families.contains(&f.key.family)) {
        grid.entry(row_key(&f.key))
            .or_insert_with(|| (f.key, BTreeMap::new()))
            .1
            .insert(f.key.lag, Cell::Failed);
    }

    let mut header = String::from("| Model |");
    let mut rule = String::from("|---|");
    if with_lambda {
        header.push_str(" λ_data | λ_phys |");
        rule.push_str("---:|---:|");
    }
    for lag in lags {
        let _ = write!(header, " LAG {lag} MAE | LAG {lag} RMSE | LAG {lag} NMSE |");
        rule.push_str("---:|---:|---:|");
    }
    let _ = writeln!(out, "{header}\n{rule}");

    for (key, cells) in grid.values() {
        let mut label = key.family.display_name().to_string();
        if seeds.len() > 1 {
            let _ = write!(label, " (seed {})", key.seed);
        }
        let _ = write!(out, "| {label} |");
        if with_lambda {
            let _ = write!(
                out,
                " {} | {} |",
                lambda(key.weights.lambda_data),
                lambda(key.weights.lambda_phys)
            );
        }
        for lag in lags {
            match cells.get(lag) {
                Some(Cell::Ok(m)) => {
                    let _ = write!(out, " {:.4} | {:.4} | {:.4} |", m.mae, m.rmse, m.nmse);
                }
                Some(Cell::Failed) => out.push_str(" failed | failed | failed |"),
                None => out.push_str(" – | – | – |"),
            }
        }
        out.push('\n');
    }
}

/// Per-cell wall times, kept apart from the deterministic reports.
pub fn emit_timings(outcome: &BenchmarkOutcome) -> String {
    let mut s = String::from("cell,wall_time_secs\n");
    let mut rows: Vec<&BenchmarkResult> = outcome.results.iter().collect();
    rows.sort_by(|a, b| a.key.cmp(&b.key));
    for r in rows {
        let _ = writeln!(s, "{},{:.3}", r.key.slug(), r.wall_time_secs);
    }
    s
}

/// Machine-readable record of what a benchmark run consumed and produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub grid: BenchmarkGrid,
    pub split_ratio: f64,
    pub overrides: BTreeMap<Family, HyperOverrides>,
    /// Input file → SHA-256.
    pub data_hashes: BTreeMap<String, String>,
    /// Pollutant → breakpoint table version.
    pub breakpoints: BTreeMap<String, String>,
    /// Report file → SHA-256.
    pub report_hashes: BTreeMap<String, String>,
    pub cells: usize,
    pub failed_cells: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(v: f64) -> MetricBundle {
        MetricBundle {
            mae: v,
            mse: v * v,
            rmse: v,
            nmse: 0.5,
            r2: 0.5,
        }
    }

    fn result(family: Family, lag: usize, w: LossWeights) -> BenchmarkResult {
        BenchmarkResult {
            key: CellKey {
                pollutant: Pollutant::Pm25,
                lag,
                family,
                weights: w,
                seed: 42,
            },
            train: bundle(1.0),
            test: bundle(lag as f64 + 0.25),
            wall_time_secs: 1.5,
        }
    }

    #[test]
    fn four_lags_make_one_row_with_twelve_metrics() {
        let outcome = BenchmarkOutcome {
            results: [1, 7, 14, 30]
                .iter()
                .map(|&l| result(Family::Lr, l, LossWeights::DATA_ONLY))
                .collect(),
            ..Default::default()
        };
        let md = emit_report(&outcome, ReportFormat::Markdown).unwrap();
        let rows: Vec<&str> = md.lines().filter(|l| l.starts_with("| LR |")).collect();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].matches('|').count() - 2, 12);
        assert!(!md.contains("1.5"), "wall time leaked into the report");
    }

    #[test]
    fn lambda_rows_in_table_order() {
        let outcome = BenchmarkOutcome {
            results: LossWeights::standard_grid()
                .into_iter()
                .rev()
                .map(|w| result(Family::MlpPhys, 1, w))
                .collect(),
            ..Default::default()
        };
        let md = emit_report(&outcome, ReportFormat::Markdown).unwrap();
        let lambdas: Vec<String> = md
            .lines()
            .filter(|l| l.starts_with("| MLP+Physics |"))
            .map(|l| l.split('|').skip(2).take(2).map(str::trim).collect::<Vec<_>>().join(","))
            .collect();
        assert_eq!(lambdas, ["0.0,1.0", "0.3,0.7", "0.5,0.5", "0.7,0.3", "1.0,0.0"]);
    }

    #[test]
    fn csv_round_trip_with_failure() {
        let outcome = BenchmarkOutcome {
            results: vec![result(Family::Lstm, 7, LossWeights::DATA_ONLY)],
            failures: vec![FailedCell {
                key: result(Family::Sarimax, 7, LossWeights::DATA_ONLY).key,
                error: "did not converge, twice".into(),
            }],
            plots: Vec::new(),
        };
        let csv = emit_report(&outcome, ReportFormat::Csv).unwrap();
        let back = read_results_csv(csv.as_bytes()).unwrap();
        assert_eq!(back.failures, outcome.failures);
        assert_eq!(back.results[0].test, outcome.results[0].test);
        assert_eq!(emit_report(&back, ReportFormat::Csv).unwrap(), csv);
        let md = emit_report(&outcome, ReportFormat::Markdown).unwrap();
        assert!(md.contains("| SARIMAX | failed"));
        assert!(md.contains("## Failed cells"));
    }

    #[test]
    fn format_parsing_and_empty_input() {
        assert_eq!("markdown".parse::<ReportFormat>().unwrap(), ReportFormat::Markdown);
        assert!(matches!("pdf".parse::<ReportFormat>(), Err(Error::UnknownFormat(_))));
        assert!(matches!(
            emit_report(&BenchmarkOutcome::default(), ReportFormat::Csv),
            Err(Error::NoResults)
        ));
    }
}
