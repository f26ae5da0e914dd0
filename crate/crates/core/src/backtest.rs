//! Long-only E-mini style futures backtest driven by calibrated trough probabilities.

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::series::DailySeries;

pub const MULTIPLIER: f64 = 50.0;
pub const COST_PER_CONTRACT: f64 = 5.0;
/// Reported profit factor when there are wins but no losses.
pub const PROFIT_FACTOR_CAP: f64 = 999.0;
pub const DEFAULT_THRESHOLD: f64 = 0.05;
pub const DEFAULT_CAPITAL: f64 = 100_000.0;
pub const HOLDING_PERIODS: [usize; 7] = [5, 7, 10, 12, 15, 17, 20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sizing {
    Fixed,
    Pyramiding,
}

impl Sizing {
    pub fn as_str(self) -> &'static str {
        match self {
            Sizing::Fixed => "fixed",
            Sizing::Pyramiding => "pyramiding",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fixed" => Some(Sizing::Fixed),
            "pyramiding" => Some(Sizing::Pyramiding),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trade {
    pub entry_date: NaiveDate,
    pub exit_date: NaiveDate,
    pub entry_close: f64,
    pub exit_close: f64,
    pub size: u32,
    pub pnl: f64,
}

pub fn trade_pnl(entry: f64, exit: f64, size: u32) -> f64 {
    let s = f64::from(size);
    (exit - entry) * MULTIPLIER * s - COST_PER_CONTRACT * s
}

/// Signal flags on the probability calendar. Consecutive calendar entries
/// count as consecutive signal days for pyramiding.
#[derive(Debug, Clone, PartialEq)]
pub struct Signals {
    pub calendar: Vec<NaiveDate>,
    pub active: Vec<bool>,
}

impl Signals {
    pub fn dates(&self) -> Vec<NaiveDate> {
        self.calendar
            .iter()
            .zip(&self.active)
            .filter(|(_, a)| **a)
            .map(|(d, _)| *d)
            .collect()
    }

    /// Length of the signal run ending at each calendar position (0 when inactive).
    pub fn run_lengths(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.active.len());
        let mut run = 0u32;
        for &a in &self.active {
            run = if a { run + 1 } else { 0 };
            out.push(run);
        }
        out
    }
}

pub fn generate_signals(probs: &DailySeries, threshold: f64) -> Result<Signals> {
    if let Some(p) = probs
        .values()
        .iter()
        .find(|p| !p.is_nan() && !(0.0..=1.0).contains(*p))
    {
        return Err(Error::InvalidInput(format!("probability {p} outside [0,1]")));
    }
    Ok(Signals {
        calendar: probs.dates().to_vec(),
        active: probs.values().iter().map(|&p| p > threshold).collect(),
    })
}

/// One trade per signal date, entered at that day's close and exited at the
/// close `holding` rows later in the price calendar.
pub fn simulate(
    signals: &Signals,
    closes: &DailySeries,
    holding: usize,
    sizing: Sizing,
) -> Result<Vec<Trade>> {
    if holding == 0 {
        return Err(Error::InvalidInput("holding period must be positive".into()));
    }
    let runs = signals.run_lengths();
    let mut trades = Vec::new();
    for (k, date) in signals.calendar.iter().enumerate() {
        if !signals.active[k] {
            continue;
        }
        let Some(i) = closes.position(*date) else {
            log::warn!("no close on signal date {date}; trade dropped");
            continue;
        };
        let j = i + holding;
        if j >= closes.len() {
            log::warn!("signal on {date} exits beyond the price series; trade dropped");
            continue;
        }
        let entry = closes.values()[i];
        let exit = closes.values()[j];
        if !entry.is_finite() || !exit.is_finite() {
            return Err(Error::Validation(format!("missing close around {date}")));
        }
        let size = match sizing {
            Sizing::Fixed => 1,
            Sizing::Pyramiding => runs[k],
        };
        trades.push(Trade {
            entry_date: *date,
            exit_date: closes.dates()[j],
            entry_close: entry,
            exit_close: exit,
            size,
            pnl: trade_pnl(entry, exit, size),
        });
    }
    Ok(trades)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub total_pnl: f64,
    pub sharpe: f64,
    pub profit_factor: f64,
    /// Largest peak-to-trough equity change, non-positive.
    pub max_drawdown: f64,
    /// Drawdown as a percentage of the equity peak it started from.
    pub max_drawdown_pct: f64,
    pub n_trades: usize,
}

/// Daily mark-to-market equity from the first entry to the last exit.
pub fn equity_curve(trades: &[Trade], closes: &DailySeries, capital: f64) -> Result<Vec<f64>> {
    let mut spans = Vec::with_capacity(trades.len());
    for t in trades {
        let i = closes
            .position(t.entry_date)
            .ok_or_else(|| Error::InvalidInput(format!("entry {} not in prices", t.entry_date)))?;
        let j = closes
            .position(t.exit_date)
            .ok_or_else(|| Error::InvalidInput(format!("exit {} not in prices", t.exit_date)))?;
        spans.push((i, j));
    }
    let start = spans.iter().map(|s| s.0).min().unwrap_or(0);
    let end = spans.iter().map(|s| s.1).max().unwrap_or(0);
    let px = closes.values();
    let mut curve = Vec::with_capacity(end + 1 - start);
    for day in start..=end {
        let mut eq = capital;
        for (t, &(i, j)) in trades.iter().zip(&spans) {
            if day >= j {
                eq += t.pnl;
            } else if day >= i {
                eq += (px[day] - t.entry_close) * MULTIPLIER * f64::from(t.size);
            }
        }
        curve.push(eq);
    }
    Ok(curve)
}

pub fn metrics(trades: &[Trade], closes: &DailySeries, capital: f64) -> Result<BacktestReport> {
    if trades.is_empty() {
        return Err(Error::InvalidInput("no trades to evaluate".into()));
    }
    let curve = equity_curve(trades, closes, capital)?;
    let changes: Vec<f64> = curve.windows(2).map(|w| w[1] - w[0]).collect();
    if changes.len() < 2 {
        return Err(Error::Numerical("equity series too short for Sharpe".into()));
    }
    let n = changes.len() as f64;
    let mean = changes.iter().sum::<f64>() / n;
    let var = changes.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 {
        return Err(Error::Numerical("zero-variance equity: Sharpe undefined".into()));
    }
    let sharpe = mean / var.sqrt() * 252f64.sqrt();

    let wins: f64 = trades.iter().filter(|t| t.pnl > 0.0).map(|t| t.pnl).sum();
    let losses: f64 = trades.iter().filter(|t| t.pnl < 0.0).map(|t| -t.pnl).sum();
    let profit_factor = if losses > 0.0 {
        wins / losses
    } else if wins > 0.0 {
        PROFIT_FACTOR_CAP
    } else {
        0.0
    };

    let mut peak = curve[0];
    let mut max_dd = 0.0;
    let mut max_dd_pct = 0.0;
    for &e in &curve {
        if e > peak {
            peak = e;
        }
        let dd = e - peak;
        if dd < max_dd {
            max_dd = dd;
            max_dd_pct = if peak > 0.0 { -dd / peak * 100.0 } else { f64::INFINITY };
        }
    }
    Ok(BacktestReport {
        total_pnl: trades.iter().map(|t| t.pnl).sum(),
        sharpe,
        profit_factor,
        max_drawdown: max_dd,
        max_drawdown_pct: max_dd_pct,
        n_trades: trades.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub holding: usize,
    pub sizing: Sizing,
    pub report: BacktestReport,
}

pub fn sensitivity_sweep(
    probs: &DailySeries,
    closes: &DailySeries,
    threshold: f64,
    holdings: &[usize],
    sizings: &[Sizing],
    capital: f64,
) -> Result<Vec<SweepRow>> {
    let signals = generate_signals(probs, threshold)?;
    let cells: Vec<(usize, Sizing)> = holdings
        .iter()
        .flat_map(|&h| sizings.iter().map(move |&s| (h, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(holding, sizing)| {
            let trades = simulate(&signals, closes, holding, sizing)?;
            Ok(SweepRow {
                holding,
                sizing,
                report: metrics(&trades, closes, capital)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn cal(n: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2023, 1, 2).unwrap();
        (0..n).map(|i| d0 + Duration::days(i as i64)).collect()
    }

    fn series(v: &[f64]) -> DailySeries {
        DailySeries::new(cal(v.len()), v.to_vec()).unwrap()
    }

    #[test]
    fn pnl_rows() {
        assert_eq!(trade_pnl(4351.50, 4244.50, 1), -5355.0);
        assert_eq!(trade_pnl(4402.25, 4254.00, 2), -14835.0);
        assert_eq!(trade_pnl(100.0, 100.0, 3), -15.0);
    }

    #[test]
    fn strict_threshold() {
        let p = series(&[0.05, 0.06, 0.0]);
        let s = generate_signals(&p, 0.05).unwrap();
        assert_eq!(s.active, vec![false, true, false]);
        assert!(generate_signals(&series(&[0.0; 3]), 0.05).unwrap().dates().is_empty());
        assert!(generate_signals(&series(&[1.5]), 0.05).is_err());
    }

    #[test]
    fn pyramid_sizes_count_runs() {
        let p = series(&[0.1, 0.1, 0.1, 0.0, 0.1, 0.1, 0.0, 0.0, 0.0, 0.0]);
        let closes = series(&[100.0; 10]);
        let s = generate_signals(&p, 0.05).unwrap();
        let t = simulate(&s, &closes, 2, Sizing::Pyramiding).unwrap();
        let sizes: Vec<u32> = t.iter().map(|t| t.size).collect();
        assert_eq!(sizes, vec![1, 2, 3, 1, 2]);
    }

    #[test]
    fn late_signal_dropped() {
        let p = series(&[0.0, 0.0, 0.0, 0.9]);
        let s = generate_signals(&p, 0.05).unwrap();
        assert!(simulate(&s, &series(&[1.0, 2.0, 3.0, 4.0]), 2, Sizing::Fixed)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn profit_factor_cases() {
        let closes = series(&[100.0, 103.0, 101.0, 104.0, 104.0, 104.0]);
        let mk = |i: usize, j: usize, pnl: f64| Trade {
            entry_date: closes.dates()[i],
            exit_date: closes.dates()[j],
            entry_close: closes.values()[i],
            exit_close: closes.values()[j],
            size: 1,
            pnl,
        };
        let r = metrics(&[mk(0, 1, 100.0), mk(1, 2, -50.0)], &closes, 1000.0).unwrap();
        assert_eq!(r.profit_factor, 2.0);
        let r = metrics(&[mk(0, 3, trade_pnl(100.0, 104.0, 1))], &closes, 1000.0).unwrap();
        assert_eq!(r.profit_factor, PROFIT_FACTOR_CAP);
        assert!(r.max_drawdown <= 0.0);
    }

    #[test]
    fn ruinous_drawdown_exceeds_hundred_percent() {
        let closes = series(&[100.0, 120.0, 60.0, 50.0]);
        let s = Signals {
            calendar: closes.dates().to_vec(),
            active: vec![true, false, false, false],
        };
        let t = simulate(&s, &closes, 3, Sizing::Fixed).unwrap();
        let r = metrics(&t, &closes, 0.0).unwrap();
        // Equity peaks at +1000 and falls to -2505.
        assert!(r.max_drawdown_pct > 100.0);
        assert_eq!(r.max_drawdown, -3505.0);
    }

    #[test]
    fn flat_equity_is_error() {
        let closes = series(&[100.0; 6]);
        let s = Signals {
            calendar: closes.dates().to_vec(),
            active: vec![false; 6],
        };
        assert!(metrics(&simulate(&s, &closes, 2, Sizing::Fixed).unwrap(), &closes, 0.0).is_err());
        let t = vec![Trade {
            entry_date: closes.dates()[0],
            exit_date: closes.dates()[3],
            entry_close: 100.0,
            exit_close: 100.0,
            size: 1,
            pnl: 0.0,
        }];
        assert!(metrics(&t, &closes, 0.0).is_err());
    }
}
