//! Command-line driver: ingest → build-lags → train / benchmark → report.

pub mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use aqi_forecast::eval::{
    emit_report, emit_timings, read_results_csv, run_benchmark, BenchmarkInputs, MetricBundle, RunManifest,
};
use aqi_forecast::ingest::{aggregate_daily_mean, merge_years, parse_epa_daily_csv, series_summary};
use aqi_forecast::lag::{build_lag_dataset, chrono_split};
use aqi_forecast::{
    DailySeries64, Family, FittedModel64, LagDataset64, LossWeights, ModelSpec, Pollutant, ReportFormat,
};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

pub use config::RunConfig;

/// Environment variable naming the output directory; `--out` beats it, it beats the config.
pub const OUT_ENV: &str = "AQI_FORECAST_OUT";

/// Exit code for configuration, I/O and usage errors. Failed benchmark cells use
/// `min(failures, 100)`, so the two never collide.
pub const ERROR_EXIT: i32 = 101;

#[derive(Debug, Parser)]
#[command(name = "aqi-forecast", version, about = "Multi-horizon AQI forecasting benchmark")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; built-in standard grid when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = one per logical CPU).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Replaces the configured seed list with this single seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_ENV)]
    pub out: Option<PathBuf>,
    /// Report format printed to stdout.
    #[arg(long, global = true, default_value = "markdown", value_parser = parse_format)]
    pub format: ReportFormat,
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: aqi_forecast::Error| e.to_string())
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Parse raw EPA daily exports into one station-averaged series per pollutant.
    Ingest,
    /// Build one lag dataset per (pollutant, lag) from the ingested series.
    BuildLags,
    /// Fit a single grid cell on its training split and save a checkpoint.
    Train(TrainArgs),
    /// Run the full grid and write reports, plot data and a manifest.
    Benchmark,
    /// Re-render a finished benchmark's results.
    Report {
        /// Directory holding results.csv (defaults to the output directory).
        dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub pollutant: Pollutant,
    #[arg(long)]
    pub lag: usize,
    #[arg(long)]
    pub family: Family,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_data: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda_phys: f64,
}

/// Config file, then environment and flags on top.
pub fn resolve_config(global: &GlobalArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &global.out {
        cfg.output_dir = out.clone();
    }
    if let Some(j) = global.jobs {
        cfg.jobs = j;
    }
    if let Some(s) = global.seed {
        cfg.seeds = vec![s];
    }
    Ok(cfg)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> anyhow::Result<i32> {
    let cfg = resolve_config(&cli.global)?;
    match &cli.command {
        Command::Ingest => cmd_ingest(&cfg, stdout),
        Command::BuildLags => cmd_build_lags(&cfg, stdout),
        Command::Train(args) => cmd_train(&cfg, args, stdout),
        Command::Benchmark => cmd_benchmark(&cfg, cli.global.format, stdout),
        Command::Report { dir } => {
            cmd_report(dir.as_deref().unwrap_or(&cfg.output_dir), cli.global.format, stdout)?;
            Ok(0)
        }
    }
}

pub fn series_path(out: &Path, p: Pollutant) -> PathBuf {
    out.join("series").join(format!("{}.csv", p.code()))
}

pub fn lag_path(out: &Path, p: Pollutant, lag: usize) -> PathBuf {
    out.join("lags").join(format!("{}_lag{lag}.csv", p.code()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn cmd_ingest(cfg: &RunConfig, stdout: &mut dyn Write) -> anyhow::Result<i32> {
    for &p in &cfg.pollutants {
        let Some(src) = cfg.data.get(&p) else {
            bail!("no [data.{}] section in the config", p.code());
        };
        let mut years = Vec::new();
        let mut dropped = 0;
        for file in &src.files {
            let parsed = parse_epa_daily_csv::<f64, _>(open(file)?, &src.columns, src.date_format)
                .with_context(|| format!("parsing {}", file.display()))?;
            dropped += parsed.dropped;
            years.push(aggregate_daily_mean(&parsed.observations, p));
        }
        let series = merge_years(&years).with_context(|| format!("merging {} files", p.code()))?;
        let path = series_path(&cfg.output_dir, p);
        let mut w = create(&path)?;
        series.write_csv(&mut w)?;
        w.flush()?;

        let s = series_summary(&series)?;
        let summary = path.with_file_name(format!("{}_summary.csv", p.code()));
        let mut w = create(&summary)?;
        writeln!(
            w,
            "pollutant,records,first_date,last_date,aqi_min,aqi_max,aqi_mean,aqi_std,conc_min,conc_max,conc_mean,conc_std,dropped_rows"
        )?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.code(),
            s.n,
            s.first_date,
            s.last_date,
            s.aqi.min,
            s.aqi.max,
            s.aqi.mean,
            s.aqi.std,
            s.concentration.min,
            s.concentration.max,
            s.concentration.mean,
            s.concentration.std,
            dropped
        )?;
        w.flush()?;
        writeln!(
            stdout,
            "{}: {} daily records ({} to {}), AQI {:.2}..{:.2} mean {:.2}, {} raw rows dropped -> {}",
            p.code(),
            s.n,
            s.first_date,
            s.last_date,
            s.aqi.min,
            s.aqi.max,
            s.aqi.mean,
            dropped,
            path.display()
        )?;
    }
    Ok(0)
}

/// Writes every requested lag file it can; failures are reported per file.
pub fn cmd_build_lags(cfg: &RunConfig, stdout: &mut dyn Write) -> anyhow::Result<i32> {
    let mut failed = Vec::new();
    for &p in &cfg.pollutants {
        let src = series_path(&cfg.output_dir, p);
        let series = DailySeries64::read_csv(open(&src)?, p).with_context(|| format!("reading {}", src.display()))?;
        for &lag in &cfg.lags {
            let path = lag_path(&cfg.output_dir, p, lag);
            let result = build_lag_dataset(&series, lag).map_err(anyhow::Error::from).and_then(|ds| {
                let mut w = create(&path)?;
                ds.write_csv(&mut w)?;
                w.flush()?;
                Ok(ds.len())
            });
            match result {
                Ok(n) => writeln!(stdout, "{}: {n} rows", path.display())?,
                Err(e) => {
                    writeln!(stdout, "{}: FAILED: {e:#}", path.display())?;
                    failed.push(path);
                }
            }
        }
    }
    if !failed.is_empty() {
        bail!("{} lag file(s) could not be built", failed.len());
    }
    Ok(0)
}

fn read_lags(out: &Path, p: Pollutant, lag: usize) -> anyhow::Result<LagDataset64> {
    let path = lag_path(out, p, lag);
    let ds = LagDataset64::read_csv(open(&path)?, p).with_context(|| format!("reading {}", path.display()))?;
    if ds.lag != lag {
        bail!("{} holds lag {} data", path.display(), ds.lag);
    }
    Ok(ds)
}

pub fn cmd_train(cfg: &RunConfig, args: &TrainArgs, stdout: &mut dyn Write) -> anyhow::Result<i32> {
    let weights = LossWeights::new(args.lambda_data, args.lambda_phys)?;
    let seed = cfg.seeds[0];
    let mut spec = ModelSpec::new(args.family, seed).with_weights(weights);
    if let Some(o) = cfg.hyper.get(&args.family) {
        spec = spec.with_overrides(o);
    }
    spec.validate()?;
    let ds = read_lags(&cfg.output_dir, args.pollutant, args.lag)?;
    let split = chrono_split(&ds, cfg.split_ratio)?;
    let table = cfg.table(args.pollutant)?;
    let model = FittedModel64::fit(&spec, &split.train, Some(&table))?;
    let pred = model.predict(&split.test)?;
    let m = MetricBundle::compute(&split.test.targets(), &pred)?;

    let key = aqi_forecast::eval::CellKey {
        pollutant: args.pollutant,
        lag: args.lag,
        family: args.family,
        weights,
        seed,
    };
    let path = cfg.output_dir.join("checkpoints").join(format!("{}.json", key.slug()));
    let mut w = create(&path)?;
    model.save_json(&mut w)?;
    w.flush()?;
    writeln!(
        stdout,
        "{} lag {} {} λ=({}, {}) seed {}: test MAE={:.4} RMSE={:.4} NMSE={:.4} R2={:.4} -> {}",
        args.pollutant,
        args.lag,
        args.family.display_name(),
        weights.lambda_data,
        weights.lambda_phys,
        seed,
        m.mae,
        m.rmse,
        m.nmse,
        m.r2,
        path.display()
    )?;
    Ok(0)
}

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_MD: &str = "results.md";
pub const TIMINGS_CSV: &str = "timings.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

pub fn cmd_benchmark(cfg: &RunConfig, format: ReportFormat, stdout: &mut dyn Write) -> anyhow::Result<i32> {
    let out = &cfg.output_dir;
    let mut datasets = BTreeMap::new();
    let mut data_hashes = BTreeMap::new();
    let mut missing = Vec::new();
    for &p in &cfg.pollutants {
        for &lag in &cfg.lags {
            let path = lag_path(out, p, lag);
            if !path.is_file() {
                missing.push(path.display().to_string());
                continue;
            }
            datasets.insert((p, lag), read_lags(out, p, lag)?);
            let rel = path.strip_prefix(out).unwrap_or(&path);
            data_hashes.insert(rel.display().to_string(), sha256_file(&path)?);
        }
    }
    if !missing.is_empty() {
        bail!("missing lag datasets (run build-lags first):\n  {}", missing.join("\n  "));
    }
    let mut tables = BTreeMap::new();
    let mut breakpoints = BTreeMap::new();
    for &p in &cfg.pollutants {
        let t = cfg.table(p)?;
        breakpoints.insert(p.code().to_string(), t.version.clone());
        if let Some(path) = cfg.data.get(&p).and_then(|d| d.breakpoints.as_ref()) {
            data_hashes.insert(path.display().to_string(), sha256_file(path)?);
        }
        tables.insert(p, t);
    }

    let grid = cfg.grid();
    let inputs = BenchmarkInputs {
        datasets,
        tables,
        split_ratio: cfg.split_ratio,
        overrides: cfg.hyper.clone(),
    };
    let outcome = run_benchmark(&grid, &inputs, cfg.jobs);

    let mut report_hashes = BTreeMap::new();
    for (name, fmt) in [(RESULTS_CSV, ReportFormat::Csv), (RESULTS_MD, ReportFormat::Markdown)] {
        let path = out.join(name);
        fs::write(&path, emit_report(&outcome, fmt)?).with_context(|| format!("writing {}", path.display()))?;
        report_hashes.insert(name.to_string(), sha256_file(&path)?);
    }
    fs::write(out.join(TIMINGS_CSV), emit_timings(&outcome))?;
    for (key, plot) in &outcome.plots {
        let mut w = create(&out.join("plots").join(format!("{}.csv", key.slug())))?;
        plot.write_csv(&mut w)?;
        w.flush()?;
    }
    let manifest = RunManifest {
        tool: "aqi-forecast".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        grid,
        split_ratio: cfg.split_ratio,
        overrides: cfg.hyper.clone(),
        data_hashes,
        breakpoints,
        report_hashes,
        cells: outcome.results.len() + outcome.failures.len(),
        failed_cells: outcome.failures.len(),
    };
    let mut w = create(&out.join(MANIFEST_JSON))?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    writeln!(w)?;
    w.flush()?;

    write!(stdout, "{}", emit_report(&outcome, format)?)?;
    Ok(outcome.failures.len().min(100) as i32)
}

pub fn cmd_report(dir: &Path, format: ReportFormat, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let path = dir.join(RESULTS_CSV);
    let outcome = read_results_csv(open(&path)?).with_context(|| format!("reading {}", path.display()))?;
    write!(stdout, "{}", emit_report(&outcome, format)?)?;
    Ok(())
}
