use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aqi_forecast::synthetic::synthetic_epa_csv;
use aqi_forecast::Pollutant;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_aqi-forecast");

fn raw_files(dir: &Path) {
    fs::create_dir_all(dir.join("raw")).unwrap();
    for p in Pollutant::ALL {
        for year in 2022..=2024 {
            let name = format!("raw/{}_{year}.csv", p.code().to_lowercase());
            fs::write(dir.join(name), synthetic_epa_csv(p, year, 3, 5)).unwrap();
        }
    }
}

fn config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"
output_dir = "out"
lags = [1, 7]
families = ["LR", "SARIMAX", "MLP_PHYS"]
lambda_grid = [[0.3, 0.7], [1.0, 0.0]]

[data.PM25]
files = ["raw/pm25_2022.csv", "raw/pm25_2023.csv", "raw/pm25_2024.csv"]
date_format = "mdy"

[data.O3]
files = ["raw/o3_2022.csv", "raw/o3_2023.csv", "raw/o3_2024.csv"]

[hyper.MLP_PHYS]
epochs = 20
{extra}"#
    );
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], cfg: &Path) -> Output {
    Command::new(BIN)
        .arg("--config")
        .arg(cfg)
        .args(args)
        .env_remove("AQI_FORECAST_OUT")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn prepared(extra: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    raw_files(dir.path());
    let cfg = config(dir.path(), extra);
    ok(&run(&["ingest"], &cfg));
    ok(&run(&["build-lags"], &cfg));
    (dir, cfg)
}

#[test]
fn ingest_is_idempotent_and_writes_a_summary() {
    let dir = TempDir::new().unwrap();
    raw_files(dir.path());
    let cfg = config(dir.path(), "");
    let stdout = ok(&run(&["ingest"], &cfg));
    assert!(stdout.contains("PM25: 1096 daily records"), "{stdout}");
    let series = dir.path().join("out/series/PM25.csv");
    let first = fs::read(&series).unwrap();
    assert!(first.starts_with(b"DATE,DAILY_MEAN,DAILY_AQI\n"));
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 1097);
    ok(&run(&["ingest"], &cfg));
    assert_eq!(fs::read(&series).unwrap(), first);
    let summary = fs::read_to_string(dir.path().join("out/series/O3_summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("O3,1096,2022-01-01,2024-12-31,"));
}

#[test]
fn missing_raw_file_is_named() {
    let dir = TempDir::new().unwrap();
    raw_files(dir.path());
    fs::remove_file(dir.path().join("raw/pm25_2023.csv")).unwrap();
    let out = run(&["ingest"], &config(dir.path(), ""));
    assert_eq!(out.status.code(), Some(101));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pm25_2023.csv"));
}

#[test]
fn invalid_config_lists_every_problem() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "lags = [0]\nfamilies = [\"ARIMA\"]\nsplit_ratio = 2.0\n").unwrap();
    let out = run(&["benchmark"], &cfg);
    assert_eq!(out.status.code(), Some(101));
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["lag 0", "ARIMA", "split_ratio"] {
        assert!(err.contains(needle), "{needle}: {err}");
    }
}

#[test]
fn default_lags_give_eight_files_and_custom_lags_two() {
    let dir = TempDir::new().unwrap();
    raw_files(dir.path());
    let cfg = config(dir.path(), "").to_string_lossy().replace("run.toml", "defaults.toml");
    let text = fs::read_to_string(dir.path().join("run.toml")).unwrap().replace("lags = [1, 7]\n", "");
    fs::write(&cfg, text).unwrap();
    let cfg = PathBuf::from(cfg);
    ok(&run(&["ingest"], &cfg));
    ok(&run(&["build-lags"], &cfg));
    assert_eq!(fs::read_dir(dir.path().join("out/lags")).unwrap().count(), 8);

    let custom = dir.path().join("custom.toml");
    fs::write(&custom, "output_dir = \"custom\"\nlags = [3]\n").unwrap();
    fs::create_dir_all(dir.path().join("custom")).unwrap();
    fs::rename(dir.path().join("out/series"), dir.path().join("custom/series")).unwrap();
    ok(&run(&["build-lags"], &custom));
    let mut names: Vec<String> = fs::read_dir(dir.path().join("custom/lags"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["O3_lag3.csv", "PM25_lag3.csv"]);
    let head = fs::read_to_string(dir.path().join("custom/lags/PM25_lag3.csv")).unwrap();
    assert!(head.starts_with("DATE,X_CONC,X_AQI,Y_AQI_LAG_3\n"));
}

#[test]
fn oversized_lag_fails_alone() {
    let (dir, _) = prepared("");
    let cfg = dir.path().join("long.toml");
    fs::write(&cfg, "output_dir = \"out\"\nlags = [2, 5000]\n").unwrap();
    let out = run(&["build-lags"], &cfg);
    assert_eq!(out.status.code(), Some(101));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PM25_lag5000.csv: FAILED"), "{stdout}");
    assert!(dir.path().join("out/lags/PM25_lag2.csv").is_file());
    assert!(dir.path().join("out/lags/O3_lag2.csv").is_file());
}

#[test]
fn train_writes_a_checkpoint_and_a_metric_line() {
    let (dir, cfg) = prepared("");
    let stdout = ok(&run(
        &["train", "--pollutant", "PM25", "--lag", "1", "--family", "LR", "--seed", "3"],
        &cfg,
    ));
    assert!(stdout.starts_with("PM25 lag 1 LR"), "{stdout}");
    assert!(stdout.contains("MAE=") && stdout.contains("NMSE="));
    let ck = dir.path().join("out/checkpoints/PM25_lag1_LR_ld1_lp0_seed3.json");
    let model = aqi_forecast::FittedModel64::load_json(fs::File::open(ck).unwrap()).unwrap();
    assert_eq!(model.spec.seed, 3);
}

#[test]
fn train_rejects_physics_weights_on_a_plain_family() {
    let (_dir, cfg) = prepared("");
    let out = run(
        &["train", "--pollutant", "O3", "--lag", "7", "--family", "MLP", "--lambda-data", "0.5", "--lambda-phys", "0.5"],
        &cfg,
    );
    assert_eq!(out.status.code(), Some(101));
}

#[test]
fn benchmark_is_reproducible_and_report_rerenders_it() {
    let (dir, cfg) = prepared("");
    let md = ok(&run(&["benchmark", "--jobs", "1"], &cfg));
    let out = dir.path().join("out");
    assert_eq!(md, fs::read_to_string(out.join("results.md")).unwrap());
    let csv = fs::read(out.join("results.csv")).unwrap();
    let manifest = fs::read(out.join("manifest.json")).unwrap();

    ok(&run(&["benchmark", "--jobs", "2"], &cfg));
    assert_eq!(fs::read(out.join("results.csv")).unwrap(), csv);
    assert_eq!(fs::read(out.join("manifest.json")).unwrap(), manifest);

    let m: serde_json::Value = serde_json::from_slice(&manifest).unwrap();
    assert_eq!(m["cells"], 2 * 2 * (2 + 2));
    assert_eq!(m["failed_cells"], 0);
    assert_eq!(m["data_hashes"].as_object().unwrap().len(), 4);
    assert_eq!(m["grid"]["seeds"][0], 42);

    // plot rows = test rows
    let lag = fs::read_to_string(out.join("lags/O3_lag7.csv")).unwrap().lines().count() - 1;
    let test = lag - (0.8 * lag as f64).floor() as usize;
    let plot = fs::read_to_string(out.join("plots/O3_lag7_SARIMAX_ld1_lp0_seed42.csv")).unwrap();
    assert!(plot.starts_with("DATE,TRUE_AQI,PRED_AQI\n"));
    assert_eq!(plot.lines().count() - 1, test);

    let rerendered = ok(&run(&["report", out.to_str().unwrap()], &cfg));
    assert_eq!(rerendered, md);
    let as_csv = ok(&run(&["report", "--format", "csv"], &cfg));
    assert_eq!(as_csv.as_bytes(), csv.as_slice());
}

#[test]
fn failed_cells_set_the_exit_code() {
    let (dir, cfg) = prepared("[hyper.SARIMAX]\nsarimax_max_iterations = 1\n");
    let out = run(&["benchmark"], &cfg);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let md = fs::read_to_string(dir.path().join("out/results.md")).unwrap();
    assert!(md.contains("## Failed cells"));
    assert!(md.contains("| LR |"), "other cells still reported");
}

#[test]
fn output_dir_precedence_is_flag_then_env_then_config() {
    let (dir, cfg) = prepared("");
    let env_dir = dir.path().join("from-env");
    let flag_dir = dir.path().join("from-flag");
    for d in [&env_dir, &flag_dir] {
        copy_dir(&dir.path().join("out/lags"), &d.join("lags")).unwrap();
    }
    let base = [
        "--config",
        cfg.to_str().unwrap(),
        "train",
        "--pollutant",
        "PM25",
        "--lag",
        "1",
        "--family",
        "LR",
    ];
    let env_run = Command::new(BIN).args(base).env("AQI_FORECAST_OUT", &env_dir).output().unwrap();
    assert!(ok(&env_run).contains("from-env"));
    let flag_run = Command::new(BIN)
        .args(base)
        .arg("--out")
        .arg(&flag_dir)
        .env("AQI_FORECAST_OUT", &env_dir)
        .output()
        .unwrap();
    assert!(ok(&flag_run).contains("from-flag"));
}

fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    fs::create_dir_all(to)?;
    for e in fs::read_dir(from)? {
        let e = e?;
        fs::copy(e.path(), to.join(e.file_name()))?;
    }
    Ok(())
}

#[test]
fn unknown_format_is_a_usage_error() {
    let out = Command::new(BIN).args(["report", "--format", "pdf"]).output().unwrap();
    assert_eq!(out.status.code(), Some(101));
}
