//! EPA breakpoint tables, the piecewise-linear concentration-to-AQI map, and the
//! data/physics loss terms used by the physics-guided models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Pollutant;
use crate::lag::ColumnScale;
use crate::scalar::Scalar;

const PM25_TOML: &str = include_str!("../data/breakpoints/pm25.toml");
const O3_TOML: &str = include_str!("../data/breakpoints/o3.toml");

/// Digits kept when comparing AQI index strings.
const INDEX_SCALE: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakpointSegment<T> {
    pub c_lo: T,
    pub c_hi: T,
    pub i_lo: T,
    pub i_hi: T,
}

impl<T: Scalar> BreakpointSegment<T> {
    #[inline]
    fn interpolate(&self, c: T) -> T {
        // ratio is exactly 0 at c_lo and exactly 1 at c_hi, so endpoints map exactly
        self.i_lo + (self.i_hi - self.i_lo) * ((c - self.c_lo) / (self.c_hi - self.c_lo))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakpointTable<T> {
    pub pollutant: Pollutant,
    pub version: String,
    /// Decimal places kept when truncating a concentration before lookup.
    pub truncation: u32,
    pub aqi_cap: T,
    pub segments: Vec<BreakpointSegment<T>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableConfig {
    pollutant: Pollutant,
    #[serde(default)]
    version: String,
    truncation: u32,
    aqi_cap: String,
    segments: Vec<[String; 4]>,
}

/// Parses a decimal string into an integer count of `10^-scale` units. Fails when the
/// string carries more digits than `scale` allows.
fn parse_fixed(s: &str, scale: u32) -> Option<i128> {
    let s = s.trim();
    let (neg, s) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty()
        || !int.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
        || frac.len() > scale as usize
    {
        return None;
    }
    let mut v: i128 = if int.is_empty() { 0 } else { int.parse().ok()? };
    for i in 0..scale as usize {
        v = v * 10 + frac.as_bytes().get(i).map_or(0, |b| (b - b'0') as i128);
    }
    Some(if neg { -v } else { v })
}

impl<T: Scalar> BreakpointTable<T> {
    /// Loads and validates a table from its TOML text. Values are decimal strings parsed
    /// straight into `T`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TableConfig = toml::from_str(text)?;
        let bad = |msg: String| Error::Breakpoint(format!("{}: {msg}", cfg.pollutant));
        if cfg.segments.is_empty() {
            return Err(bad("no segments".into()));
        }
        let cap = parse_fixed(&cfg.aqi_cap, INDEX_SCALE)
            .ok_or_else(|| bad(format!("bad aqi_cap `{}`", cfg.aqi_cap)))?;
        if cap != 500 * 10i128.pow(INDEX_SCALE) {
            return Err(bad(format!("aqi_cap must be 500, got {}", cfg.aqi_cap)));
        }

        let mut fixed = Vec::with_capacity(cfg.segments.len());
        for (k, seg) in cfg.segments.iter().enumerate() {
            let conc = |s: &String| {
                parse_fixed(s, cfg.truncation).ok_or_else(|| {
                    bad(format!(
                        "segment {k}: concentration `{s}` is not a decimal with at most {} places",
                        cfg.truncation
                    ))
                })
            };
            let index = |s: &String| {
                parse_fixed(s, INDEX_SCALE)
                    .ok_or_else(|| bad(format!("segment {k}: bad index `{s}`")))
            };
            let f = (conc(&seg[0])?, conc(&seg[1])?, index(&seg[2])?, index(&seg[3])?);
            if f.0 >= f.1 {
                return Err(bad(format!("segment {k}: c_lo {} must be below c_hi {}", seg[0], seg[1])));
            }
            if f.2 >= f.3 {
                return Err(bad(format!("segment {k}: i_lo {} must be below i_hi {}", seg[2], seg[3])));
            }
            fixed.push(f);
        }
        if fixed[0].0 != 0 || fixed[0].2 != 0 {
            return Err(bad("first segment must start at concentration 0 and index 0".into()));
        }
        let index_unit = 10i128.pow(INDEX_SCALE);
        for k in 1..fixed.len() {
            let (prev, next) = (fixed[k - 1], fixed[k]);
            let c_gap = next.0 - prev.1;
            let i_gap = next.2 - prev.3;
            if !(0..=1).contains(&c_gap) {
                return Err(bad(format!(
                    "segments {} and {k} {} in concentration ({} .. {})",
                    k - 1,
                    if c_gap < 0 { "overlap" } else { "leave a gap" },
                    cfg.segments[k - 1][1],
                    cfg.segments[k][0]
                )));
            }
            if !(0..=index_unit).contains(&i_gap) {
                return Err(bad(format!(
                    "segments {} and {k} are not contiguous in index ({} .. {})",
                    k - 1,
                    cfg.segments[k - 1][3],
                    cfg.segments[k][2]
                )));
            }
        }
        if fixed.last().map(|f| f.3) > Some(cap) {
            return Err(bad("last segment exceeds aqi_cap".into()));
        }

        let num = |s: &str| -> Result<T> {
            s.trim().parse().map_err(|_| Error::Parse {
                what: "breakpoint value",
                value: s.to_string(),
            })
        };
        let segments = cfg
            .segments
            .iter()
            .map(|s| {
                Ok(BreakpointSegment {
                    c_lo: num(&s[0])?,
                    c_hi: num(&s[1])?,
                    i_lo: num(&s[2])?,
                    i_hi: num(&s[3])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BreakpointTable {
            pollutant: cfg.pollutant,
            version: cfg.version,
            truncation: cfg.truncation,
            aqi_cap: num(&cfg.aqi_cap)?,
            segments,
        })
    }

    /// The tables shipped with the crate.
    pub fn epa_default(pollutant: Pollutant) -> Self {
        let text = match pollutant {
            Pollutant::Pm25 => PM25_TOML,
            Pollutant::O3 => O3_TOML,
        };
        Self::from_toml(text).expect("shipped breakpoint tables are valid")
    }

    /// Drops digits beyond `truncation` decimal places.
    pub fn truncate(&self, conc: T) -> T {
        let p = T::of(10f64.powi(self.truncation as i32));
        let scaled = conc * p;
        let nearest = scaled.round();
        // values like 35.4 * 10 may land a hair below 354
        let tol = nearest.abs().max(T::one()) * T::epsilon() * T::of(16.0);
        if (scaled - nearest).abs() <= tol {
            nearest / p
        } else {
            scaled.floor() / p
        }
    }

    /// Breakpoint AQI of one concentration.
    pub fn compute_aqi(&self, conc: T) -> Result<T> {
        if conc < T::zero() || conc.is_nan() {
            return Err(Error::NegativeConcentration(conc.as_f64()));
        }
        let c = self.truncate(conc);
        // first segment whose upper bound covers c; a c in the gap below that segment's
        // c_lo resolves to the segment's i_lo
        let Some(seg) = self.segments.iter().find(|s| c <= s.c_hi) else {
            return Ok(self.aqi_cap);
        };
        let aqi = if c < seg.c_lo {
            seg.i_lo
        } else {
            seg.interpolate(c)
        };
        Ok(aqi.max(T::zero()).min(self.aqi_cap))
    }

    /// Breakpoint AQI per concentration, optionally mapped into a model's scaled target space.
    pub fn reference(&self, conc: &[T], target_scale: Option<&ColumnScale<T>>) -> Result<Vec<T>> {
        conc.iter()
            .map(|&c| {
                let aqi = self.compute_aqi(c)?;
                Ok(target_scale.map_or(aqi, |s| s.transform(aqi)))
            })
            .collect()
    }
}

/// `(lambda_data, lambda_phys)`: both non-negative, not both zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_data: f64,
    pub lambda_phys: f64,
}

impl LossWeights {
    pub const DATA_ONLY: LossWeights = LossWeights {
        lambda_data: 1.0,
        lambda_phys: 0.0,
    };

    pub fn new(lambda_data: f64, lambda_phys: f64) -> Result<Self> {
        let ok = lambda_data.is_finite()
            && lambda_phys.is_finite()
            && lambda_data >= 0.0
            && lambda_phys >= 0.0
            && (lambda_data > 0.0 || lambda_phys > 0.0);
        if !ok {
            return Err(Error::InvalidLossWeights(lambda_data, lambda_phys));
        }
        Ok(LossWeights {
            lambda_data,
            lambda_phys,
        })
    }

    /// The five weight rows of the ablation grid, physics-only first.
    pub fn standard_grid() -> Vec<LossWeights> {
        [(0.0, 1.0), (0.3, 0.7), (0.5, 0.5), (0.7, 0.3), (1.0, 0.0)]
            .into_iter()
            .map(|(d, p)| LossWeights::new(d, p).expect("grid rows are valid"))
            .collect()
    }
}

/// Mean squared error between predictions and targets.
pub fn data_loss<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T> {
    mse_terms(pred, truth)
}

/// Mean squared deviation of predictions from breakpoint AQI of the matching concentrations.
/// With `target_scale`, the reference AQI is first mapped into the prediction's scaled space.
pub fn physics_loss<T: Scalar>(
    pred: &[T],
    conc: &[T],
    table: &BreakpointTable<T>,
    target_scale: Option<&ColumnScale<T>>,
) -> Result<T> {
    if pred.len() != conc.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: conc.len(),
        });
    }
    let reference = table.reference(conc, target_scale)?;
    mse_terms(pred, &reference)
}

pub fn total_loss<T: Scalar>(data: T, phys: T, w: LossWeights) -> T {
    T::of(w.lambda_data) * data + T::of(w.lambda_phys) * phys
}

fn mse_terms<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::NoSamples);
    }
    let sum: T = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    Ok(sum / T::of_usize(a.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_segment() -> BreakpointTable<f64> {
        BreakpointTable::from_toml(
            r#"
            pollutant = "PM25"
            truncation = 1
            aqi_cap = "500"
            segments = [["0.0", "9.0", "0", "50"], ["9.1", "35.4", "51", "100"]]
            "#,
        )
        .unwrap()
    }

    #[test]
    fn shipped_tables_validate() {
        let pm = BreakpointTable::<f64>::epa_default(Pollutant::Pm25);
        assert!(pm.segments.len() >= 6);
        assert_eq!(pm.segments.last().unwrap().i_hi, 500.0);
        let o3 = BreakpointTable::<f32>::epa_default(Pollutant::O3);
        assert_eq!(o3.truncation, 3);
        assert_eq!(o3.segments[0].c_hi, 0.054f32);
    }

    #[test]
    fn rejects_degenerate_and_gapped_configs() {
        let base = |segs: &str| {
            format!("pollutant = \"PM25\"\ntruncation = 1\naqi_cap = \"500\"\nsegments = {segs}\n")
        };
        let e = BreakpointTable::<f64>::from_toml(&base(r#"[["0.0","5","0","50"],["5","5","51","60"]]"#)).unwrap_err();
        assert!(e.to_string().contains("c_lo 5 must be below c_hi 5"), "{e}");
        let e = BreakpointTable::<f64>::from_toml(&base(r#"[["0.0","9.0","0","50"],["9.5","12","51","60"]]"#)).unwrap_err();
        assert!(e.to_string().contains("gap"), "{e}");
        let e = BreakpointTable::<f64>::from_toml(&base(r#"[["0.0","9.0","0","50"],["8.0","12","51","60"]]"#)).unwrap_err();
        assert!(e.to_string().contains("overlap"), "{e}");
        let e = BreakpointTable::<f64>::from_toml(&base(r#"[["0.0","9.0","0","50"],["9.1","12","55","60"]]"#)).unwrap_err();
        assert!(e.to_string().contains("index"), "{e}");
        let e = BreakpointTable::<f64>::from_toml(&base(r#"[["0.05","9.0","0","50"]]"#)).unwrap_err();
        assert!(e.to_string().contains("at most 1 places"), "{e}");
        let e = BreakpointTable::<f64>::from_toml("truncation = 1\naqi_cap = \"500\"\nsegments = []\n").unwrap_err();
        assert!(e.to_string().contains("pollutant"), "{e}");
    }

    #[test]
    fn interpolation_examples() {
        let t = one_segment();
        assert_eq!(t.compute_aqi(0.0).unwrap(), 0.0);
        assert_eq!(t.compute_aqi(4.5).unwrap(), 25.0);
        assert_eq!(t.compute_aqi(9.1).unwrap(), 51.0);
        assert_eq!(t.compute_aqi(35.4).unwrap(), 100.0);
        assert_eq!(t.compute_aqi(1e6).unwrap(), 500.0);
        assert!(matches!(t.compute_aqi(-0.1), Err(Error::NegativeConcentration(_))));
        // 9.05 truncates to 9.0
        assert_eq!(t.compute_aqi(9.05).unwrap(), 50.0);
    }

    #[test]
    fn gap_values_resolve_upward_without_truncation() {
        let mut t = one_segment();
        t.truncation = 2;
        assert_eq!(t.compute_aqi(9.05).unwrap(), 51.0);
    }

    #[test]
    fn truncation_keeps_endpoints() {
        let t = BreakpointTable::<f64>::epa_default(Pollutant::Pm25);
        for s in &t.segments {
            assert_eq!(t.truncate(s.c_hi), s.c_hi);
            assert_eq!(t.truncate(s.c_lo), s.c_lo);
        }
        assert_eq!(t.truncate(12.38), 12.3);
        let o3 = BreakpointTable::<f64>::epa_default(Pollutant::O3);
        assert_eq!(o3.truncate(0.0549), 0.054);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(data_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(data_loss(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(data_loss(&[0.0], &[1.0, 1.0]), Err(Error::LengthMismatch { .. })));

        let t = one_segment();
        assert_eq!(physics_loss(&[30.0], &[4.5], &t, None).unwrap(), 25.0);
        let conc = [0.3, 4.5, 20.0, 400.0];
        let exact: Vec<f64> = conc.iter().map(|&c| t.compute_aqi(c).unwrap()).collect();
        assert_eq!(physics_loss(&exact, &conc, &t, None).unwrap(), 0.0);
        assert!(physics_loss(&[1.0], &[1.0, 2.0], &t, None).is_err());

        let w = LossWeights::new(0.5, 0.5).unwrap();
        assert_eq!(total_loss(2.0, 4.0, w), 3.0);
        assert_eq!(total_loss(2.5, 7.0, LossWeights::DATA_ONLY), 2.5);
        assert_eq!(total_loss(2.5, 7.0, LossWeights::new(0.0, 1.0).unwrap()), 7.0);
        assert!(LossWeights::new(0.0, 0.0).is_err());
        assert!(LossWeights::new(-0.1, 1.0).is_err());
    }

    #[test]
    fn losses_match_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = BreakpointTable::<f64>::epa_default(Pollutant::Pm25);
        let n = 257;
        let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..200.0)).collect();
        let truth: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..200.0)).collect();
        let conc: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();

        // two-pass oracle: squared errors first, then a plain accumulation loop
        let mut sq = Vec::new();
        for i in 0..n {
            let d = pred[i] - truth[i];
            sq.push(d * d);
        }
        let mut acc = 0.0;
        for v in &sq {
            acc += v;
        }
        assert!((data_loss(&pred, &truth).unwrap() - acc / n as f64).abs() <= 1e-12 * acc);

        let mut acc = 0.0;
        for i in 0..n {
            let r = t.compute_aqi(conc[i]).unwrap();
            acc += (pred[i] - r) * (pred[i] - r);
        }
        let expected = acc / n as f64;
        assert!((physics_loss(&pred, &conc, &t, None).unwrap() - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn physics_loss_in_scaled_space() {
        let t = one_segment();
        let sc = crate::lag::Scaler::fit(crate::lag::ScalerKind::MINMAX_SYMMETRIC, &[("y", &[0.0, 50.0][..])]).unwrap();
        let col = sc.column("y").unwrap();
        // reference AQI 25 maps to 0 in [-1, 1] space
        assert_eq!(physics_loss(&[0.0], &[4.5], &t, Some(col)).unwrap(), 0.0);
        assert_eq!(physics_loss(&[1.0], &[4.5], &t, Some(col)).unwrap(), 1.0);
    }

    #[test]
    fn total_loss_is_linear() {
        let w = LossWeights::new(0.3, 0.7).unwrap();
        let (a, b, lp) = (1.25f64, 3.5, 2.0);
        let lhs = total_loss(a + b, lp, w) - total_loss(b, lp, w);
        assert!((lhs - 0.3 * a).abs() < 1e-12);
    }
}
