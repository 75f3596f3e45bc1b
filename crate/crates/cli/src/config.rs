//! The run configuration: one TOML file describing data, grid and hyperparameters.
//!
//! ```toml
//! output_dir = "out"
//! pollutants = ["PM25", "O3"]
//! lags = [1, 7, 14, 30]
//! families = ["LR", "SARIMAX", "MLP", "MLP_PHYS", "LSTM", "LSTM_PHYS"]
//! lambda_grid = [[0.0, 1.0], [0.3, 0.7], [0.5, 0.5], [0.7, 0.3], [1.0, 0.0]]
//! seeds = [42]
//! split_ratio = 0.8
//!
//! [data.PM25]
//! files = ["raw/pm25_2022.csv", "raw/pm25_2023.csv", "raw/pm25_2024.csv"]
//! date_format = "mdy"
//!
//! [hyper.LSTM]
//! learning_rate = 1e-4
//! ```
//!
//! Every key is optional. Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use aqi_forecast::ingest::ColumnMap;
use aqi_forecast::models::HyperOverrides;
use aqi_forecast::{BenchmarkGrid, BreakpointTable, DateFormat, Family, LossWeights, ModelSpec, Pollutant};
use serde::Deserialize;

pub const DEFAULT_OUTPUT_DIR: &str = "aqi-forecast-out";
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SPLIT: f64 = 0.8;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output_dir: Option<PathBuf>,
    pollutants: Option<Vec<String>>,
    lags: Option<Vec<i64>>,
    families: Option<Vec<String>>,
    lambda_grid: Option<Vec<Vec<f64>>>,
    seeds: Option<Vec<u64>>,
    split_ratio: Option<f64>,
    jobs: Option<usize>,
    #[serde(default)]
    data: BTreeMap<String, RawSource>,
    #[serde(default)]
    hyper: BTreeMap<String, HyperOverrides>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    files: Vec<PathBuf>,
    #[serde(default)]
    date_format: DateFormat,
    breakpoints: Option<PathBuf>,
    columns: Option<ColumnMap>,
}

/// Raw files and parsing options for one pollutant.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSource {
    pub files: Vec<PathBuf>,
    pub date_format: DateFormat,
    pub columns: ColumnMap,
    /// Custom breakpoint table; the shipped EPA table otherwise.
    pub breakpoints: Option<PathBuf>,
}

/// A fully validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub pollutants: Vec<Pollutant>,
    pub lags: Vec<usize>,
    pub families: Vec<Family>,
    pub lambda_grid: Vec<LossWeights>,
    pub seeds: Vec<u64>,
    pub split_ratio: f64,
    /// Worker threads; 0 means one per logical CPU.
    pub jobs: usize,
    pub data: BTreeMap<Pollutant, DataSource>,
    pub hyper: BTreeMap<Family, HyperOverrides>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let grid = BenchmarkGrid::standard(DEFAULT_SEED);
        RunConfig {
            output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
            pollutants: grid.pollutants,
            lags: grid.lags,
            families: grid.families,
            lambda_grid: grid.lambda_grid,
            seeds: grid.seeds,
            split_ratio: DEFAULT_SPLIT,
            jobs: 0,
            data: BTreeMap::new(),
            hyper: BTreeMap::new(),
        }
    }
}

/// Every problem found in a config, reported together.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors {
    pub source: String,
    pub errors: Vec<String>,
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid config {}:", self.source)?;
        for e in &self.errors {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigErrors> {
        let fail = |e: String| ConfigErrors {
            source: path.display().to_string(),
            errors: vec![e],
        };
        let text = std::fs::read_to_string(path).map_err(|e| fail(format!("cannot read: {e}")))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).map_err(|mut e| {
            e.source = path.display().to_string();
            e
        })
    }

    /// Parses and validates config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigErrors> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigErrors {
            source: "<text>".into(),
            errors: vec![e.to_string().trim().to_string()],
        })?;
        let mut errors = Vec::new();
        let mut cfg = RunConfig::default();
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

        if let Some(dir) = raw.output_dir {
            cfg.output_dir = resolve(&dir);
        }
        if let Some(ps) = raw.pollutants {
            cfg.pollutants = parse_list(&ps, "pollutant", &mut errors);
            if ps.is_empty() {
                errors.push("`pollutants` is empty".into());
            }
        }
        if let Some(lags) = raw.lags {
            if lags.is_empty() {
                errors.push("`lags` is empty".into());
            }
            cfg.lags = Vec::new();
            for l in lags {
                if l < 1 {
                    errors.push(format!("lag {l} must be at least 1"));
                } else if !cfg.lags.contains(&(l as usize)) {
                    cfg.lags.push(l as usize);
                }
            }
        }
        if let Some(fs) = raw.families {
            cfg.families = parse_list(&fs, "model family", &mut errors);
            if fs.is_empty() {
                errors.push("`families` is empty".into());
            }
        }
        if let Some(rows) = raw.lambda_grid {
            if rows.is_empty() {
                errors.push("`lambda_grid` is empty".into());
            }
            cfg.lambda_grid = Vec::new();
            for r in rows {
                match r.as_slice() {
                    &[d, p] => match LossWeights::new(d, p) {
                        Ok(w) => cfg.lambda_grid.push(w),
                        Err(e) => errors.push(format!("lambda_grid row [{d}, {p}]: {e}")),
                    },
                    _ => errors.push(format!("lambda_grid row {r:?} must be [lambda_data, lambda_phys]")),
                }
            }
        }
        if let Some(seeds) = raw.seeds {
            if seeds.is_empty() {
                errors.push("`seeds` is empty".into());
            }
            cfg.seeds = seeds;
        }
        if let Some(a) = raw.split_ratio {
            if !(a > 0.0 && a < 1.0) {
                errors.push(format!("split_ratio {a} must lie strictly between 0 and 1"));
            }
            cfg.split_ratio = a;
        }
        cfg.jobs = raw.jobs.unwrap_or(0);

        for (key, src) in raw.data {
            let Ok(p) = key.parse::<Pollutant>() else {
                errors.push(format!("[data.{key}]: unknown pollutant"));
                continue;
            };
            if src.files.is_empty() {
                errors.push(format!("[data.{key}]: `files` is empty"));
            }
            let files: Vec<PathBuf> = src.files.iter().map(|f| resolve(f)).collect();
            for f in &files {
                if !f.is_file() {
                    errors.push(format!("[data.{key}]: file not found: {}", f.display()));
                }
            }
            let breakpoints = src.breakpoints.as_deref().map(resolve);
            if let Some(b) = &breakpoints {
                match std::fs::read_to_string(b) {
                    Err(e) => errors.push(format!("[data.{key}]: breakpoints {}: {e}", b.display())),
                    Ok(text) => match BreakpointTable::<f64>::from_toml(&text) {
                        Err(e) => errors.push(format!("[data.{key}]: breakpoints {}: {e}", b.display())),
                        Ok(t) if t.pollutant != p => errors.push(format!(
                            "[data.{key}]: breakpoints {} describe {}",
                            b.display(),
                            t.pollutant
                        )),
                        Ok(_) => {}
                    },
                }
            }
            cfg.data.insert(
                p,
                DataSource {
                    files,
                    date_format: src.date_format,
                    columns: src.columns.unwrap_or_else(|| ColumnMap::epa_default(p)),
                    breakpoints,
                },
            );
        }

        for (key, o) in raw.hyper {
            let Ok(f) = key.parse::<Family>() else {
                errors.push(format!("[hyper.{key}]: unknown model family"));
                continue;
            };
            if let Err(e) = ModelSpec::new(f, 0).with_overrides(&o).validate() {
                errors.push(format!("[hyper.{key}]: {e}"));
            }
            cfg.hyper.insert(f, o);
        }

        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigErrors {
                source: "<text>".into(),
                errors,
            })
        }
    }

    pub fn grid(&self) -> BenchmarkGrid {
        BenchmarkGrid {
            pollutants: self.pollutants.clone(),
            lags: self.lags.clone(),
            families: self.families.clone(),
            lambda_grid: self.lambda_grid.clone(),
            seeds: self.seeds.clone(),
        }
    }

    /// The breakpoint table used for `p`: a configured file or the shipped EPA table.
    pub fn table(&self, p: Pollutant) -> anyhow::Result<BreakpointTable<f64>> {
        match self.data.get(&p).and_then(|d| d.breakpoints.as_ref()) {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                Ok(BreakpointTable::from_toml(&text)?)
            }
            None => Ok(BreakpointTable::epa_default(p)),
        }
    }
}

fn parse_list<T: std::str::FromStr>(raw: &[String], what: &str, errors: &mut Vec<String>) -> Vec<T> {
    let mut out = Vec::new();
    for s in raw {
        match s.parse() {
            Ok(v) => out.push(v),
            Err(_) => errors.push(format!("unknown {what} `{s}`")),
        }
    }
    out
}
