//! Feature engineering: transform, rank-scale, then aggregate over a lookback.
//!
//! Feature names follow `<parent>[_<transform>]_scaled_<aggregate>`, e.g.
//! `gex_oi_roc63_scaled_std`. Transforms and scaling run on the observed
//! values of each parent, so isolated gaps do not void whole windows.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::indicators::{IndicatorPanel, INDICATOR_NAMES};
use crate::learners::Matrix;
use crate::series::DailyFrame;
use crate::stats;
use crate::turnlab::LabelSet;

pub const ROC_LAG: usize = 63;
pub const TREND_WINDOW: usize = 63;
pub const WAVE_WINDOW: usize = 256;
pub const WAVE_LEVEL: usize = 3;
pub const RANK_WINDOW: usize = 252;
pub const DEFAULT_LOOKBACK: usize = 10;
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Transform {
    None,
    Roc63,
    TrendZ,
    WaveCA3,
}

impl Transform {
    pub const ALL: [Transform; 4] = [Transform::None, Transform::Roc63, Transform::TrendZ, Transform::WaveCA3];

    pub fn suffix(self) -> Option<&'static str> {
        match self {
            Transform::None => None,
            Transform::Roc63 => Some("roc63"),
            Transform::TrendZ => Some("trend_z"),
            Transform::WaveCA3 => Some("wave_cA3"),
        }
    }

    pub fn apply(self, x: &[f64]) -> Vec<f64> {
        match self {
            Transform::None => x.to_vec(),
            Transform::Roc63 => roc(x, ROC_LAG),
            Transform::TrendZ => trend_z(x, TREND_WINDOW),
            Transform::WaveCA3 => wave_ca3(x, WAVE_WINDOW),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Aggregate {
    Mean,
    Std,
    Trend,
    Last,
}

impl Aggregate {
    pub const ALL: [Aggregate; 4] = [Aggregate::Mean, Aggregate::Std, Aggregate::Trend, Aggregate::Last];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregate::Mean => "mean",
            Aggregate::Std => "std",
            Aggregate::Trend => "trend",
            Aggregate::Last => "last",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureSpec {
    pub parent: String,
    pub transform: Transform,
    pub aggregate: Aggregate,
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.parent)?;
        if let Some(s) = self.transform.suffix() {
            write!(f, "_{s}")?;
        }
        write!(f, "_scaled_{}", self.aggregate.as_str())
    }
}

impl FeatureSpec {
    pub fn name(&self) -> String {
        self.to_string()
    }

    /// Parses a feature name against the known parent indicators.
    pub fn parse(name: &str) -> Result<Self> {
        Self::parse_with(name, &INDICATOR_NAMES)
    }

    pub fn parse_with(name: &str, parents: &[&str]) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("unrecognized feature name {name:?}"));
        let (head, agg) = name.rsplit_once('_').ok_or_else(bad)?;
        let aggregate = Aggregate::parse(agg).ok_or_else(bad)?;
        let head = head.strip_suffix("_scaled").ok_or_else(bad)?;
        let mut found = None;
        for t in Transform::ALL {
            let parent = match t.suffix() {
                Some(s) => head.strip_suffix(s).and_then(|p| p.strip_suffix('_')),
                None => Some(head),
            };
            if let Some(p) = parent {
                if parents.contains(&p) {
                    found = Some(FeatureSpec {
                        parent: p.to_string(),
                        transform: t,
                        aggregate,
                    });
                    break;
                }
            }
        }
        found.ok_or_else(bad)
    }
}

/// Every (parent, transform, aggregate) combination, sorted by name.
pub fn default_specs(parents: &[&str]) -> Vec<FeatureSpec> {
    let mut out: Vec<FeatureSpec> = parents
        .iter()
        .flat_map(|p| {
            Transform::ALL.into_iter().flat_map(move |t| {
                Aggregate::ALL.into_iter().map(move |a| FeatureSpec {
                    parent: p.to_string(),
                    transform: t,
                    aggregate: a,
                })
            })
        })
        .collect();
    out.sort_by_key(FeatureSpec::name);
    out
}

pub fn roc(x: &[f64], lag: usize) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            if t < lag {
                f64::NAN
            } else {
                (x[t] - x[t - lag]) / (x[t - lag].abs() + EPS)
            }
        })
        .collect()
}

/// Deviation from the trailing mean in units of the trailing sample stdev.
pub fn trend_z(x: &[f64], window: usize) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            if t + 1 < window {
                return f64::NAN;
            }
            let w = &x[t + 1 - window..=t];
            let sd = stats::std_dev(w, 1);
            if sd < EPS {
                0.0
            } else {
                (x[t] - stats::mean(w)) / sd
            }
        })
        .collect()
}

/// Daubechies-4 (eight-tap) scaling filter.
const DB4: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

fn analyze(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n / 2)
        .map(|k| DB4.iter().enumerate().map(|(i, h)| h * x[(2 * k + i) % n]).sum())
        .collect()
}

fn synthesize(a: &[f64]) -> Vec<f64> {
    let n = 2 * a.len();
    let mut x = vec![0.0; n];
    for (k, &v) in a.iter().enumerate() {
        for (i, h) in DB4.iter().enumerate() {
            x[(2 * k + i) % n] += h * v;
        }
    }
    x
}

/// Level-`level` periodic approximation of a window, details zeroed.
pub fn wavelet_approximation(window: &[f64], level: usize) -> Vec<f64> {
    let mut a = window.to_vec();
    for _ in 0..level {
        a = analyze(&a);
    }
    for _ in 0..level {
        a = synthesize(&a);
    }
    a
}

/// Final value of the level-3 approximation of each trailing window.
pub fn wave_ca3(x: &[f64], window: usize) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            if t + 1 < window {
                f64::NAN
            } else {
                *wavelet_approximation(&x[t + 1 - window..=t], WAVE_LEVEL)
                    .last()
                    .expect("nonempty window")
            }
        })
        .collect()
}

/// 2p − 1 with p the share of the trailing window at or below today.
pub fn rolling_rank(x: &[f64], window: usize) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            if t + 1 < window || x[t].is_nan() {
                return f64::NAN;
            }
            let w = &x[t + 1 - window..=t];
            if w.iter().any(|v| v.is_nan()) {
                return f64::NAN;
            }
            let le = w.iter().filter(|&&v| v <= x[t]).count();
            2.0 * le as f64 / window as f64 - 1.0
        })
        .collect()
}

/// (mean, population stdev, OLS slope, last) of a window.
pub fn aggregate_window(w: &[f64]) -> [f64; 4] {
    [stats::mean(w), stats::std_dev(w, 0), stats::ols_slope(w), w[w.len() - 1]]
}

/// Applies `f` to the observed values only and scatters results back.
fn on_observed(x: &[f64], f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let idx: Vec<usize> = (0..x.len()).filter(|&i| !x[i].is_nan()).collect();
    let obs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let out = f(&obs);
    let mut full = vec![f64::NAN; x.len()];
    for (k, &i) in idx.iter().enumerate() {
        full[i] = out[k];
    }
    full
}

/// Transformed then rank-scaled parent series on the full calendar.
pub fn scaled_series(parent: &[f64], t: Transform) -> Vec<f64> {
    let transformed = on_observed(parent, |v| t.apply(v));
    on_observed(&transformed, |v| rolling_rank(v, RANK_WINDOW))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    pub x: Matrix,
    pub labels: Vec<u8>,
}

impl FeatureMatrix {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Wide frame with a leading `label` column.
    pub fn to_frame(&self) -> Result<DailyFrame> {
        let mut f = DailyFrame::new(self.dates.clone())?;
        f.push("label", self.labels.iter().map(|&l| f64::from(l)).collect())?;
        for (j, name) in self.names.iter().enumerate() {
            f.push(name, self.x.column(j))?;
        }
        Ok(f)
    }

    pub fn from_frame(f: &DailyFrame) -> Result<Self> {
        if f.names().first().map(String::as_str) != Some("label") {
            return Err(Error::Schema("feature file must start with date,label".into()));
        }
        let labels = f
            .column("label")
            .expect("checked above")
            .iter()
            .map(|&v| match v {
                0.0 => Ok(0),
                1.0 => Ok(1),
                _ => Err(Error::Validation(format!("label {v} is not 0 or 1"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        let names: Vec<String> = f.names()[1..].to_vec();
        let cols: Vec<&[f64]> = names.iter().map(|n| f.column(n).expect("own name")).collect();
        let n = f.dates().len();
        let mut data = Vec::with_capacity(n * names.len());
        for i in 0..n {
            for c in &cols {
                if !c[i].is_finite() {
                    return Err(Error::Validation(format!("missing feature value on {}", f.dates()[i])));
                }
                data.push(c[i]);
            }
        }
        Ok(Self {
            dates: f.dates().to_vec(),
            x: Matrix::new(n, names.len(), data)?,
            names,
            labels,
        })
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            dates: idx.iter().map(|&i| self.dates[i]).collect(),
            names: self.names.clone(),
            x: self.x.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Builds the 4D aggregate matrix, drops rows with any missing value and
/// attaches labels by date (dates without a label are dropped too).
pub fn build_matrix(
    panel: &IndicatorPanel,
    specs: &[FeatureSpec],
    lookback: usize,
    labels: &LabelSet,
) -> Result<FeatureMatrix> {
    if lookback == 0 {
        return Err(Error::InvalidInput("lookback must be positive".into()));
    }
    let n = panel.dates().len();
    let mut needed: BTreeMap<(String, Transform), ()> = BTreeMap::new();
    for s in specs {
        if panel.column(&s.parent).is_none() {
            return Err(Error::InvalidInput(format!("unknown parent indicator {}", s.parent)));
        }
        needed.insert((s.parent.clone(), s.transform), ());
    }
    let keys: Vec<(String, Transform)> = needed.into_keys().collect();
    let scaled: HashMap<(String, Transform), Vec<f64>> = keys
        .par_iter()
        .map(|(p, t)| {
            let col = panel.column(p).expect("checked above");
            ((p.clone(), *t), scaled_series(col, *t))
        })
        .collect();
    let columns: Vec<Vec<f64>> = specs
        .par_iter()
        .map(|s| {
            let src = &scaled[&(s.parent.clone(), s.transform)];
            let k = s.aggregate as usize;
            (0..n)
                .map(|t| {
                    if t + 1 < lookback {
                        return f64::NAN;
                    }
                    let w = &src[t + 1 - lookback..=t];
                    if w.iter().any(|v| v.is_nan()) {
                        f64::NAN
                    } else {
                        aggregate_window(w)[k]
                    }
                })
                .collect()
        })
        .collect();
    let label_of: HashMap<NaiveDate, u8> = labels.dates.iter().copied().zip(labels.labels.iter().copied()).collect();
    let mut dates = Vec::new();
    let mut ys = Vec::new();
    let mut data = Vec::new();
    for t in 0..n {
        let Some(&y) = label_of.get(&panel.dates()[t]) else {
            continue;
        };
        if columns.iter().any(|c| c[t].is_nan()) {
            continue;
        }
        dates.push(panel.dates()[t]);
        ys.push(y);
        data.extend(columns.iter().map(|c| c[t]));
    }
    if dates.is_empty() {
        return Err(Error::InvalidInput("feature matrix has no complete rows".into()));
    }
    Ok(FeatureMatrix {
        x: Matrix::new(dates.len(), specs.len(), data)?,
        dates,
        names: specs.iter().map(FeatureSpec::name).collect(),
        labels: ys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE7: [&str; 15] = [
        "vix_wave_cA3_scaled_last",
        "gex_oi_wave_cA3_scaled_mean",
        "upg_63d_scaled_last",
        "credit_spread_roc63_scaled_std",
        "dex_oi_wave_cA3_scaled_mean",
        "dex_oi_wave_cA3_scaled_last",
        "realized_volatility_wave_cA3_scaled_last",
        "upg_63d_wave_cA3_scaled_last",
        "vix_scaled_mean",
        "credit_spread_scaled_last",
        "gex_oi_roc63_scaled_std",
        "realized_volatility_wave_cA3_scaled_mean",
        "pcr_volume_scaled_std",
        "upg_63d_wave_cA3_scaled_mean",
        "vix_scaled_last",
    ];

    #[test]
    fn names_round_trip() {
        for n in TABLE7 {
            let s = FeatureSpec::parse(n).unwrap();
            assert_eq!(s.name(), n);
        }
        let s = FeatureSpec::parse("amihud_illiquidity_trend_z_scaled_std").unwrap();
        assert_eq!(s.transform, Transform::TrendZ);
        assert_eq!(s.aggregate, Aggregate::Std);
        assert!(FeatureSpec::parse("nonsense_scaled_mean").is_err());
        assert!(FeatureSpec::parse("vix_scaled_median").is_err());
        for s in default_specs(&INDICATOR_NAMES) {
            assert_eq!(FeatureSpec::parse(&s.name()).unwrap(), s);
        }
    }

    #[test]
    fn roc_cases() {
        let mut x = vec![100.0; 64];
        assert_eq!(roc(&x, 63)[63], 0.0);
        x[63] = 110.0;
        assert!((roc(&x, 63)[63] - 0.1).abs() < 1e-12);
        x[0] = 0.0;
        assert!(roc(&x, 63)[63].is_finite());
    }

    #[test]
    fn trend_z_guards() {
        assert_eq!(trend_z(&[3.0; 63], 63)[62], 0.0);
        let x: Vec<f64> = (0..63).map(|i| ((i * 7) % 5) as f64).collect();
        let m = stats::mean(&x);
        let z = trend_z(&x, 63)[62];
        assert!((z - (x[62] - m) / stats::std_dev(&x, 1)).abs() < 1e-12);
    }

    #[test]
    fn wavelet_behaviour() {
        assert!((wave_ca3(&[4.2; 256], 256)[255] - 4.2).abs() < 1e-12);
        let alt: Vec<f64> = (0..256).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(wave_ca3(&alt, 256)[255].abs() < 0.1);
        let ramp: Vec<f64> = (0..256).map(f64::from).collect();
        let rec = wavelet_approximation(&ramp, 3);
        for i in 64..192 {
            assert!((rec[i] - ramp[i]).abs() < 0.02 * 255.0, "{i}: {}", rec[i]);
        }
    }

    #[test]
    fn rank_extremes() {
        let mut x: Vec<f64> = (0..252).map(f64::from).collect();
        assert_eq!(rolling_rank(&x, 252)[251], 1.0);
        x[251] = -1.0;
        assert!((rolling_rank(&x, 252)[251] - (2.0 / 252.0 - 1.0)).abs() < 1e-15);
        assert_eq!(rolling_rank(&[7.0; 252], 252)[251], 1.0);
    }

    #[test]
    fn aggregates() {
        assert_eq!(aggregate_window(&[2.0; 10]), [2.0, 0.0, 0.0, 2.0]);
        let w: Vec<f64> = (0..10).map(f64::from).collect();
        let a = aggregate_window(&w);
        assert!((a[0] - 4.5).abs() < 1e-12 && (a[2] - 1.0).abs() < 1e-12 && a[3] == 9.0);
        let rev: Vec<f64> = w.iter().rev().copied().collect();
        assert!((aggregate_window(&rev)[2] + a[2]).abs() < 1e-12);
    }

    #[test]
    fn observed_subsequence() {
        let x = [1.0, f64::NAN, 3.0];
        let out = on_observed(&x, |v| v.iter().map(|a| a * 2.0).collect());
        assert_eq!(out[0], 2.0);
        assert!(out[1].is_nan());
        assert_eq!(out[2], 6.0);
    }
}
