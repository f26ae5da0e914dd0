//! Bry-Boschan turning points on daily log prices, and trough labels.
//!
//! Durations are index distances on the trading-day calendar of the input.

use std::collections::BTreeSet;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::series::DailySeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TurnKind {
    Peak,
    Trough,
}

impl TurnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TurnKind::Peak => "peak",
            TurnKind::Trough => "trough",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "peak" => Some(TurnKind::Peak),
            "trough" => Some(TurnKind::Trough),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurningPoint {
    /// Position in the price calendar.
    pub index: usize,
    pub date: NaiveDate,
    pub log_price: f64,
    pub kind: TurnKind,
}

impl TurningPoint {
    /// True when `self` is further in its own direction than `other`.
    fn more_extreme_than(&self, other: &TurningPoint) -> bool {
        match self.kind {
            TurnKind::Peak => self.log_price > other.log_price,
            TurnKind::Trough => self.log_price < other.log_price,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBParams {
    pub order: usize,
    pub min_phase: usize,
    pub min_cycle: usize,
}

impl Default for BBParams {
    fn default() -> Self {
        Self {
            order: 20,
            min_phase: 30,
            min_cycle: 90,
        }
    }
}

impl BBParams {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 || self.min_phase == 0 || self.min_cycle == 0 {
            return Err(Error::InvalidInput("BB parameters must be positive".into()));
        }
        if self.min_cycle < self.min_phase {
            return Err(Error::InvalidInput("min_cycle must be >= min_phase".into()));
        }
        Ok(())
    }
}

fn log_prices(prices: &DailySeries) -> Result<Vec<f64>> {
    prices
        .values()
        .iter()
        .zip(prices.dates())
        .map(|(p, d)| {
            if p.is_finite() && *p > 0.0 {
                Ok(p.ln())
            } else {
                Err(Error::Validation(format!("non-positive or missing price on {d}")))
            }
        })
        .collect()
}

/// Candidate turns on raw log prices. A point qualifies when it is the strict
/// extremum of the full `±order` window around it.
pub fn find_local_extrema_log(
    dates: &[NaiveDate],
    logp: &[f64],
    order: usize,
) -> Result<Vec<TurningPoint>> {
    let n = logp.len();
    if order == 0 {
        return Err(Error::InvalidInput("order must be positive".into()));
    }
    if n <= 2 * order {
        return Err(Error::InvalidInput(format!(
            "series of length {n} too short for order {order}"
        )));
    }
    let mut out = Vec::new();
    for i in order..n - order {
        let x = logp[i];
        let window = (i - order..=i + order).filter(|&j| j != i);
        let mut is_peak = true;
        let mut is_trough = true;
        for j in window {
            if logp[j] >= x {
                is_peak = false;
            }
            if logp[j] <= x {
                is_trough = false;
            }
            if !is_peak && !is_trough {
                break;
            }
        }
        let kind = if is_peak {
            TurnKind::Peak
        } else if is_trough {
            TurnKind::Trough
        } else {
            continue;
        };
        out.push(TurningPoint {
            index: i,
            date: dates[i],
            log_price: x,
            kind,
        });
    }
    Ok(out)
}

pub fn find_local_extrema(prices: &DailySeries, order: usize) -> Result<Vec<TurningPoint>> {
    let logp = log_prices(prices)?;
    find_local_extrema_log(prices.dates(), &logp, order)
}

/// Collapses same-kind runs to their most extreme member; ties keep the earlier.
pub fn enforce_alternation(turns: &[TurningPoint]) -> Vec<TurningPoint> {
    let mut out: Vec<TurningPoint> = Vec::with_capacity(turns.len());
    for t in turns {
        match out.last_mut() {
            Some(last) if last.kind == t.kind => {
                if t.more_extreme_than(last) {
                    *last = *t;
                }
            }
            _ => out.push(*t),
        }
    }
    out
}

/// How far a turn stands out from the mean of its neighbours, in its own direction.
fn prominence(turns: &[TurningPoint], i: usize) -> f64 {
    let mut acc = 0.0;
    let mut k = 0.0;
    if i > 0 {
        acc += turns[i - 1].log_price;
        k += 1.0;
    }
    if i + 1 < turns.len() {
        acc += turns[i + 1].log_price;
        k += 1.0;
    }
    if k == 0.0 {
        return 0.0;
    }
    let dev = turns[i].log_price - acc / k;
    match turns[i].kind {
        TurnKind::Peak => dev,
        TurnKind::Trough => -dev,
    }
}

/// Removes phases shorter than `min_phase`, restarting the scan after every drop.
pub fn censor_phases(turns: &[TurningPoint], min_phase: usize) -> Vec<TurningPoint> {
    let mut t = enforce_alternation(turns);
    'restart: loop {
        for i in 0..t.len().saturating_sub(1) {
            if t[i + 1].index - t[i].index < min_phase {
                let drop = if prominence(&t, i) > prominence(&t, i + 1) {
                    i + 1
                } else if prominence(&t, i) < prominence(&t, i + 1) {
                    i
                } else {
                    i + 1
                };
                t.remove(drop);
                t = enforce_alternation(&t);
                continue 'restart;
            }
        }
        return t;
    }
}

/// Removes same-kind pairs closer than `min_cycle`, restarting after every drop.
pub fn censor_cycles(turns: &[TurningPoint], min_cycle: usize, logp: &[f64]) -> Vec<TurningPoint> {
    let mut t = enforce_alternation(turns);
    'restart: loop {
        for i in 0..t.len().saturating_sub(2) {
            let (t1, t2, t3) = (t[i], t[i + 1], t[i + 2]);
            if t3.index - t1.index < min_cycle {
                let span = &logp[t1.index..=t3.index];
                let middle_is_extreme = match t2.kind {
                    TurnKind::Peak => span.iter().all(|&x| x <= t2.log_price),
                    TurnKind::Trough => span.iter().all(|&x| x >= t2.log_price),
                };
                if middle_is_extreme {
                    t.remove(i + 2);
                    t.remove(i);
                } else {
                    t.remove(i + 1);
                }
                t = enforce_alternation(&t);
                continue 'restart;
            }
        }
        return t;
    }
}

pub fn identify_turns_log(
    dates: &[NaiveDate],
    logp: &[f64],
    params: &BBParams,
) -> Result<Vec<TurningPoint>> {
    params.validate()?;
    let cand = find_local_extrema_log(dates, logp, params.order)?;
    let alt = enforce_alternation(&cand);
    let phased = censor_phases(&alt, params.min_phase);
    let cycled = censor_cycles(&phased, params.min_cycle, logp);
    Ok(enforce_alternation(&cycled))
}

pub fn identify_turns(prices: &DailySeries, params: &BBParams) -> Result<Vec<TurningPoint>> {
    let logp = log_prices(prices)?;
    identify_turns_log(prices.dates(), &logp, params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub dates: Vec<NaiveDate>,
    pub labels: Vec<u8>,
}

impl LabelSet {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Marks the `window + 1` calendar dates ending at each trough.
pub fn make_labels(
    turns: &[TurningPoint],
    all_dates: &[NaiveDate],
    window: usize,
) -> Result<LabelSet> {
    let mut positive = BTreeSet::new();
    for t in turns.iter().filter(|t| t.kind == TurnKind::Trough) {
        let pos = all_dates
            .binary_search(&t.date)
            .map_err(|_| Error::InvalidInput(format!("trough date {} not in calendar", t.date)))?;
        for j in pos.saturating_sub(window)..=pos {
            positive.insert(j);
        }
    }
    let labels = (0..all_dates.len())
        .map(|i| u8::from(positive.contains(&i)))
        .collect();
    Ok(LabelSet {
        dates: all_dates.to_vec(),
        labels,
    })
}
