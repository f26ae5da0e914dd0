//! Parent indicators computed from raw chains, bars, prices and macro series.

use std::collections::HashMap;

use chrono::NaiveDate;

use crate::dataio::{Bar, IntradayBars, MacroSeries, OptionChainSnapshot, OptionContract, OptionKind};
use crate::error::{Error, Result};
use crate::series::{DailyFrame, DailySeries};
use crate::stats;

/// Canonical indicator names, in panel column order.
pub const INDICATOR_NAMES: [&str; 21] = [
    "gex_oi",
    "gex_volume",
    "dex_oi",
    "ofi",
    "flow_concentration_10d",
    "upg_63d",
    "credit_spread",
    "amihud_illiquidity",
    "ffr_slope",
    "ffr_basis",
    "realized_volatility",
    "vix",
    "vrp",
    "pcr_oi",
    "pcr_volume",
    "risk_neutral_skewness",
    "risk_neutral_kurtosis",
    "fx_momentum_6e_21d",
    "fx_momentum_6j_21d",
    "fx_rv_6e_21d",
    "fx_rv_6j_21d",
];

pub const FLOW_WINDOW: usize = 10;
pub const VWAP_WINDOW: usize = 63;
pub const FX_WINDOW: usize = 21;
pub const RN_TENOR_DAYS: f64 = 30.0;
pub const GEX_PERCENTILE: f64 = 99.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    OpenInterest,
    Volume,
}

fn weight(c: &OptionContract, w: Weight) -> f64 {
    match w {
        Weight::OpenInterest => c.open_interest,
        Weight::Volume => c.volume,
    }
}

pub fn gex(contracts: &[OptionContract], w: Weight) -> f64 {
    contracts
        .iter()
        .map(|c| match c.kind {
            OptionKind::Call => c.gamma * weight(c, w),
            OptionKind::Put => -c.gamma * weight(c, w),
        })
        .sum::<f64>()
        * 100.0
}

pub fn dex(contracts: &[OptionContract]) -> f64 {
    contracts.iter().map(|c| c.delta * c.open_interest).sum::<f64>() * 100.0
}

/// Put/call weight ratio; `None` when calls carry no weight or the ratio is
/// exactly zero (treated as a data artifact).
pub fn pcr(contracts: &[OptionContract], w: Weight) -> Option<f64> {
    let (mut puts, mut calls) = (0.0, 0.0);
    for c in contracts {
        match c.kind {
            OptionKind::Call => calls += weight(c, w),
            OptionKind::Put => puts += weight(c, w),
        }
    }
    (calls > 0.0 && puts != 0.0).then(|| puts / calls)
}

pub fn ofi(bars: &[Bar]) -> f64 {
    bars.iter()
        .map(|b| {
            let s = b.close - b.open;
            if s > 0.0 {
                b.volume
            } else if s < 0.0 {
                -b.volume
            } else {
                0.0
            }
        })
        .sum()
}

pub fn flow_concentration(window: &[f64]) -> f64 {
    let s: f64 = window.iter().sum();
    let a: f64 = window.iter().map(|v| v.abs()).sum();
    if a == 0.0 {
        0.0
    } else {
        s * s.abs() / a
    }
}

/// Annualized realized volatility in percentage points, including the
/// overnight gap from `prior_close` to the first open.
pub fn realized_volatility(bars: &[Bar], prior_close: f64) -> Option<f64> {
    if bars.len() < 2 || !(prior_close > 0.0) {
        return None;
    }
    let overnight = (bars[0].open / prior_close).ln();
    let mut ss = overnight * overnight + (bars[0].close / bars[0].open).ln().powi(2);
    for w in bars.windows(2) {
        ss += (w[1].close / w[0].close).ln().powi(2);
    }
    Some((252.0 * ss).sqrt() * 100.0)
}

pub fn dollar_volume(bars: &[Bar]) -> f64 {
    bars.iter().map(|b| b.close * b.volume).sum()
}

fn binary(a: &DailySeries, b: &DailySeries, f: impl Fn(f64, f64) -> f64) -> Result<DailySeries> {
    if a.dates() != b.dates() {
        return Err(Error::InvalidInput("series are not aligned".into()));
    }
    let v = a.values().iter().zip(b.values()).map(|(x, y)| f(*x, *y)).collect();
    DailySeries::new(a.dates().to_vec(), v)
}

pub fn credit_spread(hy: &DailySeries, rf: &DailySeries) -> Result<DailySeries> {
    binary(hy, rf, |h, r| h - r)
}

/// |return| per unit of dollar volume; missing when volume is not positive.
pub fn amihud(ret: &DailySeries, dollar_volume: &DailySeries) -> Result<DailySeries> {
    binary(ret, dollar_volume, |r, v| if v > 0.0 { r.abs() / v } else { f64::NAN })
}

pub fn ffr_slope(c1: &DailySeries, c3: &DailySeries) -> Result<DailySeries> {
    binary(c1, c3, |a, b| a - b)
}

pub fn ffr_basis(c1: &DailySeries, effr: &DailySeries) -> Result<DailySeries> {
    binary(c1, effr, |c, e| (100.0 - c) - e)
}

pub fn vrp(vix: &DailySeries, rv: &DailySeries) -> Result<DailySeries> {
    binary(vix, rv, |v, r| v - r)
}

/// (P_t − VWAP)/VWAP with VWAP the volume-weighted mean close over the
/// trailing `window` days, today included.
pub fn unrealized_profit(closes: &[f64], volumes: &[f64], window: usize) -> Vec<f64> {
    (0..closes.len())
        .map(|t| {
            if t + 1 < window {
                return f64::NAN;
            }
            let (mut pv, mut v) = (0.0, 0.0);
            for k in t + 1 - window..=t {
                pv += closes[k] * volumes[k];
                v += volumes[k];
            }
            let vwap = pv / v;
            if vwap.is_finite() && v > 0.0 {
                (closes[t] - vwap) / vwap
            } else {
                f64::NAN
            }
        })
        .collect()
}

pub fn fx_momentum(prices: &[f64], lag: usize) -> Vec<f64> {
    (0..prices.len())
        .map(|t| {
            if t < lag {
                f64::NAN
            } else {
                (prices[t] - prices[t - lag]) / prices[t - lag]
            }
        })
        .collect()
}

/// Sample stdev of the last `window` daily log returns, annualized.
pub fn fx_rv(prices: &[f64], window: usize) -> Vec<f64> {
    (0..prices.len())
        .map(|t| {
            if t < window {
                return f64::NAN;
            }
            let r: Vec<f64> = (t + 1 - window..=t).map(|k| (prices[k] / prices[k - 1]).ln()).collect();
            stats::std_dev(&r, 1) * 252f64.sqrt()
        })
        .collect()
}

/// Removes values above the full-sample nearest-rank 99.9th percentile.
pub fn winsorize_gex(series: &DailySeries) -> DailySeries {
    let present: Vec<f64> = series.values().iter().copied().filter(|v| !v.is_nan()).collect();
    if present.is_empty() {
        return series.clone();
    }
    let cap = stats::nearest_rank(&present, GEX_PERCENTILE);
    series.map(|v| if v > cap { f64::NAN } else { v })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMoments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

/// Breeden-Litzenberger: the risk-neutral density is the second strike
/// derivative of call prices. Prices are first made nonincreasing in strike;
/// materially negative curvature afterwards is an error.
pub fn density_moments(strikes: &[f64], calls: &[f64]) -> Result<DensityMoments> {
    let m = strikes.len();
    if m < 5 || calls.len() != m {
        return Err(Error::InvalidInput("need at least five strikes".into()));
    }
    if strikes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("strikes must be strictly increasing".into()));
    }
    let mut c = calls.to_vec();
    for i in 1..m {
        c[i] = c[i].min(c[i - 1]);
    }
    let mut f = vec![0.0; m];
    for i in 1..m - 1 {
        let s1 = (c[i] - c[i - 1]) / (strikes[i] - strikes[i - 1]);
        let s2 = (c[i + 1] - c[i]) / (strikes[i + 1] - strikes[i]);
        f[i] = 2.0 * (s2 - s1) / (strikes[i + 1] - strikes[i - 1]);
    }
    let peak = f.iter().fold(0.0f64, |a, &b| a.max(b));
    if peak <= 0.0 {
        return Err(Error::Numerical("call prices carry no curvature".into()));
    }
    let mut mass = vec![0.0; m];
    for i in 1..m - 1 {
        if f[i] < -1e-9 * peak {
            return Err(Error::Numerical(format!(
                "non-convex call prices near strike {}",
                strikes[i]
            )));
        }
        mass[i] = f[i].max(0.0) * 0.5 * (strikes[i + 1] - strikes[i - 1]);
    }
    let total: f64 = mass.iter().sum();
    let mean = mass.iter().zip(strikes).map(|(p, k)| p * k).sum::<f64>() / total;
    let central = |r: i32| mass.iter().zip(strikes).map(|(p, k)| p * (k - mean).powi(r)).sum::<f64>() / total;
    let var = central(2);
    if !(var > 0.0) {
        return Err(Error::Numerical("degenerate risk-neutral density".into()));
    }
    Ok(DensityMoments {
        mean,
        variance: var,
        skewness: central(3) / var.powf(1.5),
        kurtosis: central(4) / (var * var),
    })
}

fn expiry_moments(contracts: &[OptionContract], expiry: NaiveDate) -> Result<DensityMoments> {
    let mut calls: Vec<(f64, f64)> = contracts
        .iter()
        .filter(|c| c.kind == OptionKind::Call && c.expiry == expiry)
        .map(|c| (c.strike, c.mid))
        .collect();
    calls.sort_by(|a, b| a.0.total_cmp(&b.0));
    calls.dedup_by(|a, b| a.0 == b.0);
    let (k, p): (Vec<f64>, Vec<f64>) = calls.into_iter().unzip();
    density_moments(&k, &p)
}

/// Risk-neutral (skewness, kurtosis) at `target_days` calendar days. The two
/// expiries straddling the target are combined by interpolating cumulants
/// linearly in time, so the second cumulant follows total variance.
pub fn rn_moments(snapshot: &OptionChainSnapshot, target_days: f64) -> Result<(f64, f64)> {
    let mut tenors: Vec<(f64, NaiveDate)> = snapshot
        .contracts
        .iter()
        .map(|c| ((c.expiry - snapshot.date).num_days() as f64, c.expiry))
        .filter(|(t, _)| *t > 0.0)
        .collect();
    tenors.sort_by(|a, b| a.0.total_cmp(&b.0));
    tenors.dedup();
    let below = tenors.iter().rev().find(|(t, _)| *t <= target_days).copied();
    let above = tenors.iter().find(|(t, _)| *t >= target_days).copied();
    let pair = match (below, above) {
        (Some(b), Some(a)) if b.0 < a.0 => Some((b, a)),
        _ => None,
    };
    let Some(((t1, e1), (t2, e2))) = pair else {
        let (_, e) = below.or(above).ok_or_else(|| Error::InvalidInput("chain has no live expiries".into()))?;
        let d = expiry_moments(&snapshot.contracts, e)?;
        return Ok((d.skewness, d.kurtosis));
    };
    let d1 = expiry_moments(&snapshot.contracts, e1)?;
    let d2 = expiry_moments(&snapshot.contracts, e2)?;
    let w2 = (target_days - t1) / (t2 - t1);
    let w1 = 1.0 - w2;
    let cumulants = |d: &DensityMoments| {
        let k2 = d.variance;
        (k2, d.skewness * k2.powf(1.5), (d.kurtosis - 3.0) * k2 * k2)
    };
    let (a2, a3, a4) = cumulants(&d1);
    let (b2, b3, b4) = cumulants(&d2);
    let k2 = w1 * a2 + w2 * b2;
    let k3 = w1 * a3 + w2 * b3;
    let k4 = w1 * a4 + w2 * b4;
    Ok((k3 / k2.powf(1.5), k4 / (k2 * k2) + 3.0))
}

/// Date-aligned table of all parent indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorPanel {
    pub frame: DailyFrame,
}

impl IndicatorPanel {
    pub fn dates(&self) -> &[NaiveDate] {
        self.frame.dates()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.frame.column(name)
    }
}

fn on_dates(values: Vec<f64>, dates: &[NaiveDate]) -> DailySeries {
    DailySeries::new(dates.to_vec(), values).expect("aligned by construction")
}

/// Computes every indicator on the price calendar. Per-date inputs that are
/// absent yield missing values; macro series are forward-filled first.
pub fn compute_panel(
    prices: &DailySeries,
    chains: &[OptionChainSnapshot],
    bars: &IntradayBars,
    macro_series: &MacroSeries,
) -> Result<IndicatorPanel> {
    let dates = prices.dates();
    let n = dates.len();
    let closes = prices.values();
    let chain_by_date: HashMap<NaiveDate, &OptionChainSnapshot> = chains.iter().map(|s| (s.date, s)).collect();
    let sessions = bars.sessions();
    let bars_by_date: HashMap<NaiveDate, &[Bar]> = sessions.into_iter().collect();

    let mut gex_oi = vec![f64::NAN; n];
    let mut gex_vol = vec![f64::NAN; n];
    let mut dex_oi = vec![f64::NAN; n];
    let mut pcr_oi = vec![f64::NAN; n];
    let mut pcr_vol = vec![f64::NAN; n];
    let mut rn_skew = vec![f64::NAN; n];
    let mut rn_kurt = vec![f64::NAN; n];
    let mut ofi_v = vec![f64::NAN; n];
    let mut rv = vec![f64::NAN; n];
    let mut volume = vec![f64::NAN; n];
    let mut dvol = vec![f64::NAN; n];
    for (t, d) in dates.iter().enumerate() {
        if let Some(s) = chain_by_date.get(d) {
            gex_oi[t] = gex(&s.contracts, Weight::OpenInterest);
            gex_vol[t] = gex(&s.contracts, Weight::Volume);
            dex_oi[t] = dex(&s.contracts);
            pcr_oi[t] = pcr(&s.contracts, Weight::OpenInterest).unwrap_or(f64::NAN);
            pcr_vol[t] = pcr(&s.contracts, Weight::Volume).unwrap_or(f64::NAN);
            match rn_moments(s, RN_TENOR_DAYS) {
                Ok((sk, ku)) => {
                    rn_skew[t] = sk;
                    rn_kurt[t] = ku;
                }
                Err(e) => log::debug!("risk-neutral moments unavailable on {d}: {e}"),
            }
        }
        if let Some(b) = bars_by_date.get(d) {
            ofi_v[t] = ofi(b);
            volume[t] = b.iter().map(|x| x.volume).sum();
            dvol[t] = dollar_volume(b);
            if t > 0 {
                rv[t] = realized_volatility(b, closes[t - 1]).unwrap_or(f64::NAN);
            }
        }
    }
    let flow: Vec<f64> = (0..n)
        .map(|t| {
            if t + 1 < FLOW_WINDOW {
                f64::NAN
            } else {
                let w = &ofi_v[t + 1 - FLOW_WINDOW..=t];
                if w.iter().any(|v| v.is_nan()) {
                    f64::NAN
                } else {
                    flow_concentration(w)
                }
            }
        })
        .collect();
    let upg = unrealized_profit(closes, &volume, VWAP_WINDOW);
    let ret: Vec<f64> = (0..n)
        .map(|t| if t == 0 { f64::NAN } else { closes[t] / closes[t - 1] - 1.0 })
        .collect();

    let filled = macro_series.filled()?;
    let m = |name: &str| -> Result<DailySeries> {
        let s = filled
            .series(name)
            .ok_or_else(|| Error::Schema(format!("macro column {name} missing")))?;
        Ok(on_dates(s.reindex(dates), dates))
    };
    let vix = m("vix")?;
    let rv_s = on_dates(rv, dates);
    let fx_eur = m("fx_eur")?;
    let fx_jpy = m("fx_jpy")?;

    let mut frame = DailyFrame::new(dates.to_vec())?;
    let columns: Vec<(&str, Vec<f64>)> = vec![
        ("gex_oi", winsorize_gex(&on_dates(gex_oi, dates)).values().to_vec()),
        ("gex_volume", winsorize_gex(&on_dates(gex_vol, dates)).values().to_vec()),
        ("dex_oi", dex_oi),
        ("ofi", ofi_v),
        ("flow_concentration_10d", flow),
        ("upg_63d", upg),
        ("credit_spread", credit_spread(&m("hy_yield")?, &m("rf_yield")?)?.values().to_vec()),
        (
            "amihud_illiquidity",
            amihud(&on_dates(ret, dates), &on_dates(dvol, dates))?.values().to_vec(),
        ),
        ("ffr_slope", ffr_slope(&m("ffr_c1")?, &m("ffr_c3")?)?.values().to_vec()),
        ("ffr_basis", ffr_basis(&m("ffr_c1")?, &m("effr")?)?.values().to_vec()),
        ("realized_volatility", rv_s.values().to_vec()),
        ("vix", vix.values().to_vec()),
        ("vrp", vrp(&vix, &rv_s)?.values().to_vec()),
        ("pcr_oi", pcr_oi),
        ("pcr_volume", pcr_vol),
        ("risk_neutral_skewness", rn_skew),
        ("risk_neutral_kurtosis", rn_kurt),
        ("fx_momentum_6e_21d", fx_momentum(fx_eur.values(), FX_WINDOW)),
        ("fx_momentum_6j_21d", fx_momentum(fx_jpy.values(), FX_WINDOW)),
        ("fx_rv_6e_21d", fx_rv(fx_eur.values(), FX_WINDOW)),
        ("fx_rv_6j_21d", fx_rv(fx_jpy.values(), FX_WINDOW)),
    ];
    for (name, col) in columns {
        frame.push(name, col)?;
    }
    Ok(IndicatorPanel { frame })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::black76;
    use chrono::NaiveDateTime;

    fn contract(kind: OptionKind, delta: f64, gamma: f64, oi: f64) -> OptionContract {
        OptionContract {
            expiry: NaiveDate::from_ymd_opt(2024, 2, 16).unwrap(),
            strike: 100.0,
            kind,
            delta,
            gamma,
            open_interest: oi,
            volume: oi / 2.0,
            mid: 1.0,
        }
    }

    fn bar(o: f64, c: f64, v: f64) -> Bar {
        Bar {
            ts: NaiveDateTime::default(),
            open: o,
            high: o.max(c),
            low: o.min(c),
            close: c,
            volume: v,
        }
    }

    #[test]
    fn gex_dex_pcr() {
        assert_eq!(gex(&[], Weight::OpenInterest), 0.0);
        let call = contract(OptionKind::Call, 0.5, 0.01, 100.0);
        let put = contract(OptionKind::Put, -0.5, 0.02, 50.0);
        assert!((gex(std::slice::from_ref(&call), Weight::OpenInterest) - 100.0).abs() < 1e-12);
        assert!((gex(std::slice::from_ref(&put), Weight::OpenInterest) + 100.0).abs() < 1e-12);
        let c10 = contract(OptionKind::Call, 0.5, 0.0, 10.0);
        let p10 = contract(OptionKind::Put, -0.5, 0.0, 10.0);
        assert_eq!(dex(std::slice::from_ref(&c10)), 500.0);
        assert_eq!(dex(std::slice::from_ref(&p10)), -500.0);
        assert_eq!(dex(&[c10, p10]), 0.0);
        let p200 = contract(OptionKind::Put, -0.5, 0.0, 200.0);
        assert_eq!(pcr(&[call.clone(), p200], Weight::OpenInterest), Some(2.0));
        assert_eq!(pcr(&[call], Weight::OpenInterest), None);
    }

    #[test]
    fn ofi_and_concentration() {
        assert_eq!(ofi(&[bar(1.0, 2.0, 10.0), bar(2.0, 1.0, 4.0)]), 6.0);
        assert_eq!(ofi(&[bar(1.0, 1.0, 10.0)]), 0.0);
        assert_eq!(flow_concentration(&[1.0; 10]), 10.0);
        let mixed: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(flow_concentration(&mixed), 0.0);
        assert_eq!(flow_concentration(&[0.0; 10]), 0.0);
    }

    #[test]
    fn realized_vol_cases() {
        let flat = [bar(101.005, 101.005, 1.0), bar(101.005, 101.005, 1.0)];
        let prior = 101.005 / 0.01f64.exp();
        let v = realized_volatility(&flat, prior).unwrap();
        assert!((v - 15.8745).abs() < 1e-4, "{v}");
        let still = [bar(100.0, 100.0, 1.0), bar(100.0, 100.0, 1.0)];
        assert_eq!(realized_volatility(&still, 100.0), Some(0.0));
    }

    #[test]
    fn upg_toy() {
        let u = unrealized_profit(&[100.0, 200.0], &[1.0, 3.0], 2);
        assert!(u[0].is_nan());
        assert!((u[1] - (200.0 - 175.0) / 175.0).abs() < 1e-15);
        let flat = unrealized_profit(&[5.0; 70], &[2.0; 70], 63);
        assert_eq!(flat[69], 0.0);
    }

    #[test]
    fn fx_cases() {
        let flat = vec![1.1; 30];
        assert_eq!(fx_momentum(&flat, 21)[25], 0.0);
        assert_eq!(fx_rv(&flat, 21)[25], 0.0);
        let mut dbl = vec![1.0; 22];
        dbl[21] = 2.0;
        assert_eq!(fx_momentum(&dbl, 21)[21], 1.0);
    }

    #[test]
    fn winsorize_removes_extreme() {
        let d: Vec<NaiveDate> = (0..1001)
            .map(|i| NaiveDate::from_ymd_opt(2000, 1, 1).unwrap() + chrono::Duration::days(i))
            .collect();
        let mut v = vec![0.0; 1001];
        v[500] = 1e9;
        let w = winsorize_gex(&DailySeries::new(d.clone(), v).unwrap());
        assert!(w.values()[500].is_nan());
        assert_eq!(w.values().iter().filter(|x| x.is_nan()).count(), 1);
        let calm = DailySeries::new(d, (0..1001).map(|i| (i % 7) as f64).collect()).unwrap();
        let out = winsorize_gex(&calm);
        assert_eq!(out.values(), calm.values());
    }

    fn gaussian_calls(mu: f64, sd: f64, k: &[f64]) -> Vec<f64> {
        let n = statrs::distribution::Normal::standard();
        use statrs::distribution::{Continuous, ContinuousCDF};
        k.iter()
            .map(|&x| {
                let d = (mu - x) / sd;
                (mu - x) * n.cdf(d) + sd * n.pdf(d)
            })
            .collect()
    }

    #[test]
    fn gaussian_density_moments() {
        let k: Vec<f64> = (0..200).map(|i| 50.0 + 100.0 * i as f64 / 199.0).collect();
        let c = gaussian_calls(100.0, 8.0, &k);
        let m = density_moments(&k, &c).unwrap();
        assert!(m.skewness.abs() < 0.05, "{m:?}");
        assert!((m.kurtosis - 3.0).abs() < 0.05, "{m:?}");
    }

    #[test]
    fn symmetric_two_point_density() {
        // Calls of a two-point distribution at 90 and 110.
        let k = [80.0, 90.0, 100.0, 110.0, 120.0];
        let c: Vec<f64> = k.iter().map(|&x: &f64| 0.5 * (90.0 - x).max(0.0) + 0.5 * (110.0 - x).max(0.0)).collect();
        let m = density_moments(&k, &c).unwrap();
        assert!(m.skewness.abs() < 1e-12);
    }

    #[test]
    fn lognormal_skewness() {
        let sigma: f64 = 0.25;
        let k: Vec<f64> = (0..400).map(|i| 0.2 + 3.8 * i as f64 / 399.0).collect();
        let c: Vec<f64> = k.iter().map(|&x| black76(1.0, x, 1.0, sigma, OptionKind::Call).0).collect();
        let m = density_moments(&k, &c).unwrap();
        let s2 = sigma * sigma;
        let want = (s2.exp() + 2.0) * (s2.exp() - 1.0).sqrt();
        assert!((m.skewness - want).abs() < 0.01, "{} vs {want}", m.skewness);
    }

    #[test]
    fn concave_prices_rejected() {
        let k = [80.0, 90.0, 100.0, 110.0, 120.0];
        let c = [20.0, 18.0, 10.0, 9.0, 0.0];
        assert!(density_moments(&k, &c).is_err());
    }

    #[test]
    fn rn_moments_unit_free() {
        let date = NaiveDate::from_ymd_opt(2024, 1, 2).unwrap();
        let snap = |scale: f64| {
            let mut contracts = Vec::new();
            for (days, vol) in [(16i64, 0.2), (44, 0.22)] {
                let e = date + chrono::Duration::days(days);
                for i in 0..40 {
                    let k = (60.0 + 2.0 * i as f64) * scale;
                    let (p, d, g) = black76(100.0 * scale, k, days as f64 / 365.0, vol, OptionKind::Call);
                    contracts.push(OptionContract {
                        expiry: e,
                        strike: k,
                        kind: OptionKind::Call,
                        delta: d,
                        gamma: g,
                        open_interest: 1.0,
                        volume: 1.0,
                        mid: p,
                    });
                }
            }
            OptionChainSnapshot { date, contracts }
        };
        let (s1, k1) = rn_moments(&snap(1.0), 30.0).unwrap();
        let (s2, k2) = rn_moments(&snap(7.5), 30.0).unwrap();
        assert!((s1 - s2).abs() < 1e-8 && (k1 - k2).abs() < 1e-8);
        assert!(s1 > 0.0);
    }
}
