use aqi_forecast::lag::{build_lag_dataset, chrono_split, LagRow};
use aqi_forecast::models::{fit_series, HyperOverrides, Learned, OlsModel, SarimaxSettings};
use aqi_forecast::synthetic::{standard_normal, synthetic_series};
use aqi_forecast::*;
use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 1, 1).unwrap()
}

fn dataset(p: Pollutant, days: usize, lag: usize) -> LagDataset64 {
    build_lag_dataset(&synthetic_series(p, day0(), days, 11), lag).unwrap()
}

/// Solves the 3x3 normal equations by Cramer's rule.
fn cramer(x: &[[f64; 3]], y: &[f64]) -> [f64; 3] {
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for (row, &t) in x.iter().zip(y) {
        for i in 0..3 {
            b[i] += row[i] * t;
            for j in 0..3 {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for i in 0..3 {
            m[i][k] = b[i];
        }
        *o = det(&m) / d;
    }
    out
}

fn rows(conc: &[f64], aqi: &[f64], y: &[f64]) -> LagDataset64 {
    LagDataset {
        pollutant: Pollutant::Pm25,
        lag: 1,
        rows: (0..y.len())
            .map(|i| LagRow {
                date: day0() + Duration::days(i as i64),
                x_conc: conc[i],
                x_aqi: aqi[i],
                y_future_aqi: y[i],
            })
            .collect(),
    }
}

#[test]
fn ols_recovers_noiseless_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let conc: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..50.0)).collect();
    let aqi: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..150.0)).collect();
    let y: Vec<f64> = conc.iter().zip(&aqi).map(|(c, a)| 1.0 + 2.0 * c + 3.0 * a).collect();
    let m = OlsModel::fit(&rows(&conc, &aqi, &y)).unwrap();
    for (got, want) in m.beta.iter().zip([1.0, 2.0, 3.0]) {
        assert!((got - want).abs() < 1e-8, "{:?}", m.beta);
    }
}

#[test]
fn ols_matches_normal_equations_and_residuals_are_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let conc: Vec<f64> = (0..300).map(|_| rng.gen_range(0.0..50.0)).collect();
    let aqi: Vec<f64> = conc.iter().map(|c| 2.0 * c + rng.gen_range(-10.0..10.0)).collect();
    let y: Vec<f64> = aqi.iter().map(|a| 5.0 + 0.8 * a + 6.0 * standard_normal(&mut rng)).collect();
    let ds = rows(&conc, &aqi, &y);
    let m = OlsModel::fit(&ds).unwrap();
    let x: Vec<[f64; 3]> = conc.iter().zip(&aqi).map(|(&c, &a)| [1.0, c, a]).collect();
    let oracle = cramer(&x, &y);
    for (g, w) in m.beta.iter().zip(oracle) {
        assert!((g - w).abs() < 1e-8 * w.abs().max(1.0), "{:?} vs {oracle:?}", m.beta);
    }
    let resid: Vec<f64> = y.iter().zip(m.predict(&ds)).map(|(t, p)| t - p).collect();
    for j in 0..3 {
        let dot: f64 = x.iter().zip(&resid).map(|(r, e)| r[j] * e).sum();
        assert!(dot.abs() < 1e-6, "column {j}: {dot}");
    }
}

#[test]
fn ols_rejects_collinear_design() {
    let conc: Vec<f64> = (0..20).map(f64::from).collect();
    let aqi: Vec<f64> = conc.iter().map(|c| 2.0 * c).collect();
    assert!(matches!(OlsModel::fit(&rows(&conc, &aqi, &conc)), Err(Error::RankDeficient)));
}

/// `Δy_k = β Δx_k + w_k`, `w_k = φ w_{k-1} + ε_k`.
fn simulate(n: usize, phi: f64, beta: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| 3.0 * standard_normal(&mut rng)).collect();
    let (mut y, mut w) = (vec![0.0; n], 0.0);
    for k in 1..n {
        w = phi * w + standard_normal(&mut rng);
        y[k] = y[k - 1] + beta * (x[k] - x[k - 1]) + w;
    }
    (y, x)
}

#[test]
fn sarimax_recovers_ar_coefficient() {
    let (y, _) = simulate(2000, 0.6, 0.0, 3);
    let zeros = vec![0.0; y.len()];
    let p = fit_series(&y, &zeros, &SarimaxSettings::default()).unwrap().params;
    assert!((p.phi - 0.6).abs() < 0.1, "{p:?}");
}

#[test]
fn sarimax_recovers_exogenous_coefficient() {
    let (y, x) = simulate(2000, 0.3, 2.0, 4);
    let p = fit_series(&y, &x, &SarimaxSettings::default()).unwrap().params;
    assert!((p.beta - 2.0).abs() < 0.2, "{p:?}");
}

#[test]
fn sarimax_on_white_noise_differences_finds_nothing() {
    let (y, x) = simulate(2000, 0.0, 0.0, 5);
    let p = fit_series(&y, &x, &SarimaxSettings::default()).unwrap().params;
    for c in [p.phi, p.theta, p.seasonal_phi, p.seasonal_theta, p.beta] {
        assert!(c.abs() < 0.1, "{p:?}");
    }
}

fn fit_and_predict(family: Family, w: LossWeights, seed: u64, ds: &LagDataset64) -> Vec<f64> {
    let split = chrono_split(ds, 0.8).unwrap();
    let table = BreakpointTable::epa_default(ds.pollutant);
    let spec = ModelSpec::new(family, seed).with_weights(w);
    let m = FittedModel::fit(&spec, &split.train, Some(&table)).unwrap();
    m.predict(&split.test).unwrap()
}

#[test]
fn physics_off_reproduces_the_baseline_bitwise() {
    let ds = dataset(Pollutant::Pm25, 400, 1);
    for (phys, base) in [(Family::MlpPhys, Family::Mlp), (Family::LstmPhys, Family::Lstm)] {
        let a = fit_and_predict(phys, LossWeights::DATA_ONLY, 7, &ds);
        let b = fit_and_predict(base, LossWeights::DATA_ONLY, 7, &ds);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b), "{phys} vs {base}");
    }
}

#[test]
fn physics_weight_changes_the_fit() {
    let ds = dataset(Pollutant::Pm25, 400, 1);
    let a = fit_and_predict(Family::MlpPhys, LossWeights::new(0.5, 0.5).unwrap(), 7, &ds);
    let b = fit_and_predict(Family::Mlp, LossWeights::DATA_ONLY, 7, &ds);
    assert_ne!(a, b);
}

#[test]
fn perturbing_test_rows_leaves_every_fit_untouched() {
    let ds = dataset(Pollutant::O3, 300, 7);
    let cut = chrono_split(&ds, 0.8).unwrap().train.len();
    let mut poisoned = ds.clone();
    for r in &mut poisoned.rows[cut..] {
        r.x_conc *= 3.0;
        r.x_aqi += 100.0;
        r.y_future_aqi = 499.0 - r.y_future_aqi;
    }
    let table = BreakpointTable::epa_default(Pollutant::O3);
    for family in Family::ALL {
        let w = if family.is_physics() { LossWeights::new(0.7, 0.3).unwrap() } else { LossWeights::DATA_ONLY };
        let spec = ModelSpec::new(family, 3).with_weights(w);
        let fit = |d: &LagDataset64| {
            FittedModel::fit(&spec, &chrono_split(d, 0.8).unwrap().train, Some(&table)).unwrap()
        };
        let (a, b) = (fit(&ds), fit(&poisoned));
        // compare through the bit patterns of the serialized state
        assert_eq!(
            serde_json::to_string(&a.learned).unwrap(),
            serde_json::to_string(&b.learned).unwrap(),
            "{family}"
        );
        assert_eq!(a, b, "{family}");
    }
}

#[test]
fn checkpoint_round_trips_exactly() {
    let ds = dataset(Pollutant::Pm25, 250, 14);
    let split = chrono_split(&ds, 0.8).unwrap();
    let table = BreakpointTable::epa_default(Pollutant::Pm25);
    let mut quick = HyperOverrides::default();
    quick.epochs = Some(5);
    for family in Family::ALL {
        let spec = ModelSpec::new(family, 9).with_overrides(&quick);
        let m = FittedModel::fit(&spec, &split.train, Some(&table)).unwrap();
        let mut buf = Vec::new();
        m.save_json(&mut buf).unwrap();
        let back = FittedModel64::load_json(buf.as_slice()).unwrap();
        assert_eq!(back, m, "{family}");
        let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(back.predict(&split.test).unwrap()), bits(m.predict(&split.test).unwrap()));
        assert!(FittedModel32::load_json(buf.as_slice()).is_err(), "scalar type is checked");
    }
}

#[test]
fn lstm_scales_target_and_mlp_does_not() {
    let ds = dataset(Pollutant::Pm25, 200, 1);
    let split = chrono_split(&ds, 0.8).unwrap();
    let mut quick = HyperOverrides::default();
    quick.epochs = Some(3);
    let fit = |f| FittedModel::fit(&ModelSpec::new(f, 1).with_overrides(&quick), &split.train, None).unwrap();
    assert!(matches!(fit(Family::Mlp).learned, Learned::Mlp { .. }));
    match fit(Family::Lstm).learned {
        Learned::Lstm { target, .. } => {
            let z = target.transform("Y_AQI", &split.train.targets()).unwrap();
            let (lo, hi) = z.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
            assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn physics_family_without_table_is_an_error() {
    let ds = dataset(Pollutant::Pm25, 120, 1);
    let spec = ModelSpec::new(Family::MlpPhys, 1).with_weights(LossWeights::new(0.5, 0.5).unwrap());
    assert!(matches!(
        FittedModel::fit(&spec, &ds, None),
        Err(Error::MissingBreakpointTable(Pollutant::Pm25))
    ));
}

#[test]
fn model_refuses_other_pollutant() {
    let pm = dataset(Pollutant::Pm25, 120, 1);
    let o3 = dataset(Pollutant::O3, 120, 1);
    let m = FittedModel::fit(&ModelSpec::new(Family::Lr, 0), &pm, None).unwrap();
    assert!(matches!(m.predict(&o3), Err(Error::ModelPollutant { .. })));
}

#[test]
fn f32_pipeline_runs() {
    let s = synthetic_series(Pollutant::Pm25, day0(), 200, 2);
    let s32 = DailySeries32 {
        pollutant: s.pollutant,
        rows: s
            .rows
            .iter()
            .map(|r| aqi_forecast::ingest::DailyRow {
                date: r.date,
                mean_concentration: r.mean_concentration as f32,
                mean_aqi: r.mean_aqi as f32,
            })
            .collect(),
    };
    let ds = build_lag_dataset(&s32, 1).unwrap();
    let split = chrono_split(&ds, 0.8).unwrap();
    let mut quick = HyperOverrides::default();
    quick.epochs = Some(3);
    let m = FittedModel::fit(&ModelSpec::new(Family::Mlp, 0).with_overrides(&quick), &split.train, None).unwrap();
    assert!(m.predict(&split.test).unwrap().iter().all(|v| v.is_finite()));
}
