//! On-disk schemas, loaders, writers and the synthetic market generator.
//!
//! Schemas (exact headers):
//! - `prices.csv`: `date,close`
//! - `chain.csv`: `date,expiry,strike,kind,delta,gamma,oi,volume,mid`
//! - `bars.csv`: `ts,open,high,low,close,volume`
//! - `macro.csv`: `date,hy_yield,rf_yield,effr,ffr_c1,ffr_c3,fx_eur,fx_jpy,vix`
//!
//! Yields are decimal fractions; EFFR and the Fed Funds futures quotes are in
//! percentage points and price points. Missing values are empty fields.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Weekday};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng;
use crate::series::{DailyFrame, DailySeries};

pub const DATE_FMT: &str = "%Y-%m-%d";
pub const TS_FMT: &str = "%Y-%m-%d %H:%M";
pub const MACRO_COLUMNS: [&str; 8] = [
    "hy_yield", "rf_yield", "effr", "ffr_c1", "ffr_c3", "fx_eur", "fx_jpy", "vix",
];
/// Longest run of missing macro values that forward filling may bridge.
pub const MAX_FILL_GAP: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptionKind::Call => "call",
            OptionKind::Put => "put",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionContract {
    pub expiry: NaiveDate,
    pub strike: f64,
    pub kind: OptionKind,
    pub delta: f64,
    pub gamma: f64,
    pub open_interest: f64,
    pub volume: f64,
    pub mid: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionChainSnapshot {
    pub date: NaiveDate,
    pub contracts: Vec<OptionContract>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub ts: NaiveDateTime,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntradayBars {
    pub bars: Vec<Bar>,
}

impl IntradayBars {
    /// Bars grouped by session date, in order.
    pub fn sessions(&self) -> Vec<(NaiveDate, &[Bar])> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.bars.len() {
            if i == self.bars.len() || self.bars[i].ts.date() != self.bars[start].ts.date() {
                out.push((self.bars[start].ts.date(), &self.bars[start..i]));
                start = i;
            }
        }
        out
    }
}

/// Named daily macro series; columns follow [`MACRO_COLUMNS`].
#[derive(Debug, Clone, PartialEq)]
pub struct MacroSeries {
    pub frame: DailyFrame,
}

impl MacroSeries {
    /// Forward-fills each column across at most [`MAX_FILL_GAP`] missing days.
    pub fn filled(&self) -> Result<DailyFrame> {
        let mut out = DailyFrame::new(self.frame.dates().to_vec())?;
        for (name, col) in self.frame.columns() {
            let mut v = col.to_vec();
            let mut last: Option<f64> = None;
            let mut gap = 0;
            for (i, x) in v.iter_mut().enumerate() {
                if x.is_nan() {
                    gap += 1;
                    match last {
                        Some(l) if gap <= MAX_FILL_GAP => *x = l,
                        _ => {
                            return Err(Error::Validation(format!(
                                "{name}: missing values on {} cannot be forward-filled",
                                self.frame.dates()[i]
                            )))
                        }
                    }
                } else {
                    gap = 0;
                    last = Some(*x);
                }
            }
            out.push(name, v)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketBundle {
    pub prices: DailySeries,
    pub chains: Vec<OptionChainSnapshot>,
    pub bars: IntradayBars,
    pub macro_series: MacroSeries,
    /// Indices of the troughs planted by the generator.
    pub planted_troughs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Prices,
    Chain,
    Bars,
    Macro,
    /// Any two-column `date,<name>` file.
    Daily,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Loaded {
    Series(DailySeries),
    Chain(Vec<OptionChainSnapshot>),
    Bars(IntradayBars),
    Macro(MacroSeries),
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_csv(path: &Path, schema: Schema) -> Result<Loaded> {
    let f = open(path)?;
    Ok(match schema {
        Schema::Prices => Loaded::Series(read_prices(f)?),
        Schema::Daily => Loaded::Series(read_daily(f)?.1),
        Schema::Chain => Loaded::Chain(read_chain(f)?),
        Schema::Bars => Loaded::Bars(read_bars(f)?),
        Schema::Macro => Loaded::Macro(read_macro(f)?),
    })
}

pub fn load_prices(path: &Path) -> Result<DailySeries> {
    read_prices(open(path)?)
}

pub fn load_chain(path: &Path) -> Result<Vec<OptionChainSnapshot>> {
    read_chain(open(path)?)
}

pub fn load_bars(path: &Path) -> Result<IntradayBars> {
    read_bars(open(path)?)
}

pub fn load_macro(path: &Path) -> Result<MacroSeries> {
    read_macro(open(path)?)
}

struct Rows {
    header: Vec<String>,
    rows: Vec<(usize, csv::StringRecord)>,
}

fn read_rows<R: Read>(r: R) -> Result<Rows> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec));
    }
    Ok(Rows { header, rows })
}

fn expect_header(rows: &Rows, expected: &[&str]) -> Result<()> {
    if rows.header != expected {
        return Err(Error::Schema(format!(
            "expected header {:?}, found {:?}",
            expected.join(","),
            rows.header.join(",")
        )));
    }
    Ok(())
}

fn parse_date(s: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FMT).map_err(|e| Error::Parse {
        line,
        msg: format!("bad date {s:?}: {e}"),
    })
}

fn parse_f64(s: &str, line: usize, col: &str) -> Result<f64> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    let v: f64 = s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad number {s:?} in column {col}"),
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse {
            line,
            msg: format!("non-finite number in column {col}"),
        })
    }
}

fn required(v: f64, line: usize, col: &str) -> Result<f64> {
    if v.is_nan() {
        Err(Error::Parse {
            line,
            msg: format!("missing value in column {col}"),
        })
    } else {
        Ok(v)
    }
}

fn check_order(prev: Option<NaiveDate>, d: NaiveDate, line: usize) -> Result<()> {
    match prev {
        Some(p) if p == d => Err(Error::Schema(format!("duplicate date {d} at line {line}"))),
        Some(p) if p > d => Err(Error::Schema(format!("unsorted date {d} at line {line}"))),
        _ => Ok(()),
    }
}

/// Reads a `date,<name>` file; returns the value column name and the series.
pub fn read_daily<R: Read>(r: R) -> Result<(String, DailySeries)> {
    let rows = read_rows(r)?;
    if rows.header.len() != 2 || rows.header[0] != "date" {
        return Err(Error::Schema(format!(
            "expected header date,<name>, found {:?}",
            rows.header.join(",")
        )));
    }
    let name = rows.header[1].clone();
    let mut dates = Vec::with_capacity(rows.rows.len());
    let mut values = Vec::with_capacity(rows.rows.len());
    for (line, rec) in &rows.rows {
        let d = parse_date(&rec[0], *line)?;
        check_order(dates.last().copied(), d, *line)?;
        dates.push(d);
        values.push(parse_f64(&rec[1], *line, &name)?);
    }
    Ok((name, DailySeries::new(dates, values)?))
}

pub fn read_prices<R: Read>(r: R) -> Result<DailySeries> {
    let rows = read_rows(r)?;
    expect_header(&rows, &["date", "close"])?;
    let mut dates = Vec::with_capacity(rows.rows.len());
    let mut values = Vec::with_capacity(rows.rows.len());
    for (line, rec) in &rows.rows {
        let d = parse_date(&rec[0], *line)?;
        check_order(dates.last().copied(), d, *line)?;
        let c = required(parse_f64(&rec[1], *line, "close")?, *line, "close")?;
        if c <= 0.0 {
            return Err(Error::Validation(format!("non-positive close at line {line}")));
        }
        dates.push(d);
        values.push(c);
    }
    DailySeries::new(dates, values)
}

pub fn read_chain<R: Read>(r: R) -> Result<Vec<OptionChainSnapshot>> {
    let rows = read_rows(r)?;
    expect_header(
        &rows,
        &["date", "expiry", "strike", "kind", "delta", "gamma", "oi", "volume", "mid"],
    )?;
    let mut out: Vec<OptionChainSnapshot> = Vec::new();
    let mut seen: HashSet<(NaiveDate, u64, OptionKind)> = HashSet::new();
    for (line, rec) in &rows.rows {
        let line = *line;
        let date = parse_date(&rec[0], line)?;
        let expiry = parse_date(&rec[1], line)?;
        let num = |i: usize, col: &str| -> Result<f64> {
            required(parse_f64(&rec[i], line, col)?, line, col)
        };
        let strike = num(2, "strike")?;
        let kind = match rec[3].trim() {
            "call" => OptionKind::Call,
            "put" => OptionKind::Put,
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("bad option kind {other:?}"),
                })
            }
        };
        let c = OptionContract {
            expiry,
            strike,
            kind,
            delta: num(4, "delta")?,
            gamma: num(5, "gamma")?,
            open_interest: num(6, "oi")?,
            volume: num(7, "volume")?,
            mid: num(8, "mid")?,
        };
        validate_contract(&c, date).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("line {line}: {m}")),
            other => other,
        })?;
        if out.last().is_some_and(|s| s.date > date) {
            return Err(Error::Schema(format!("unsorted date {date} at line {line}")));
        }
        if out.last().is_none_or(|s| s.date != date) {
            seen.clear();
            out.push(OptionChainSnapshot {
                date,
                contracts: Vec::new(),
            });
        }
        if !seen.insert((expiry, strike.to_bits(), kind)) {
            return Err(Error::Schema(format!(
                "duplicate contract {date} {expiry} {strike} {} at line {line}",
                kind.as_str()
            )));
        }
        out.last_mut().expect("pushed above").contracts.push(c);
    }
    Ok(out)
}

pub fn validate_contract(c: &OptionContract, date: NaiveDate) -> Result<()> {
    let bad = |m: String| Err(Error::Validation(m));
    match c.kind {
        OptionKind::Call if !(0.0..=1.0).contains(&c.delta) => {
            return bad(format!("call delta {} outside [0,1]", c.delta))
        }
        OptionKind::Put if !(-1.0..=0.0).contains(&c.delta) => {
            return bad(format!("put delta {} outside [-1,0]", c.delta))
        }
        _ => {}
    }
    if c.gamma < 0.0 {
        return bad(format!("negative gamma {}", c.gamma));
    }
    if c.open_interest < 0.0 || c.volume < 0.0 {
        return bad("negative open interest or volume".into());
    }
    if c.strike <= 0.0 {
        return bad(format!("non-positive strike {}", c.strike));
    }
    if c.mid < 0.0 {
        return bad(format!("negative mid {}", c.mid));
    }
    if c.expiry < date {
        return bad(format!("expiry {} before {date}", c.expiry));
    }
    Ok(())
}

pub fn read_bars<R: Read>(r: R) -> Result<IntradayBars> {
    let rows = read_rows(r)?;
    expect_header(&rows, &["ts", "open", "high", "low", "close", "volume"])?;
    let mut bars: Vec<Bar> = Vec::with_capacity(rows.rows.len());
    for (line, rec) in &rows.rows {
        let line = *line;
        let ts = NaiveDateTime::parse_from_str(rec[0].trim(), TS_FMT).map_err(|e| Error::Parse {
            line,
            msg: format!("bad timestamp {:?}: {e}", &rec[0]),
        })?;
        if let Some(prev) = bars.last() {
            if prev.ts == ts {
                return Err(Error::Schema(format!("duplicate timestamp {ts} at line {line}")));
            }
            if prev.ts > ts {
                return Err(Error::Schema(format!("unsorted timestamp {ts} at line {line}")));
            }
        }
        let num = |i: usize, col: &str| -> Result<f64> {
            required(parse_f64(&rec[i], line, col)?, line, col)
        };
        let b = Bar {
            ts,
            open: num(1, "open")?,
            high: num(2, "high")?,
            low: num(3, "low")?,
            close: num(4, "close")?,
            volume: num(5, "volume")?,
        };
        if b.low > b.open.min(b.close) || b.high < b.open.max(b.close) || b.volume < 0.0 {
            return Err(Error::Validation(format!("inconsistent bar at line {line}")));
        }
        bars.push(b);
    }
    Ok(IntradayBars { bars })
}

pub fn read_macro<R: Read>(r: R) -> Result<MacroSeries> {
    let rows = read_rows(r)?;
    let mut expected = vec!["date"];
    expected.extend(MACRO_COLUMNS);
    expect_header(&rows, &expected)?;
    let mut dates = Vec::with_capacity(rows.rows.len());
    let mut cols = vec![Vec::with_capacity(rows.rows.len()); MACRO_COLUMNS.len()];
    for (line, rec) in &rows.rows {
        let d = parse_date(&rec[0], *line)?;
        check_order(dates.last().copied(), d, *line)?;
        dates.push(d);
        for (k, name) in MACRO_COLUMNS.iter().enumerate() {
            cols[k].push(parse_f64(&rec[k + 1], *line, name)?);
        }
    }
    let mut frame = DailyFrame::new(dates)?;
    for (name, col) in MACRO_COLUMNS.iter().zip(cols) {
        frame.push(name, col)?;
    }
    Ok(MacroSeries { frame })
}

/// Shortest round-trip representation; missing values are empty.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io {
        path: Default::default(),
        source: std::io::Error::other(e.to_string()),
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

pub fn write_daily<W: Write>(w: W, name: &str, s: &DailySeries) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["date", name]).map_err(csv_err)?;
    for (d, v) in s.dates().iter().zip(s.values()) {
        wr.write_record([d.format(DATE_FMT).to_string(), fmt_f64(*v)])
            .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| csv_err(e.into()))
}

pub fn write_prices<W: Write>(w: W, s: &DailySeries) -> Result<()> {
    write_daily(w, "close", s)
}

/// Wide `date,<col>...` layout for any frame.
pub fn write_frame<W: Write>(w: W, f: &DailyFrame) -> Result<()> {
    let mut wr = writer(w);
    let mut head = vec!["date".to_string()];
    head.extend(f.names().iter().cloned());
    wr.write_record(&head).map_err(csv_err)?;
    let cols: Vec<&[f64]> = f.columns().map(|(_, c)| c).collect();
    for (i, d) in f.dates().iter().enumerate() {
        let mut rec = vec![d.format(DATE_FMT).to_string()];
        rec.extend(cols.iter().map(|c| fmt_f64(c[i])));
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| csv_err(e.into()))
}

/// Reads a wide `date,<col>...` file written by [`write_frame`].
pub fn read_frame<R: Read>(r: R) -> Result<DailyFrame> {
    let rows = read_rows(r)?;
    if rows.header.first().map(String::as_str) != Some("date") {
        return Err(Error::Schema("first column must be date".into()));
    }
    let names = &rows.header[1..];
    let mut dates = Vec::with_capacity(rows.rows.len());
    let mut cols = vec![Vec::with_capacity(rows.rows.len()); names.len()];
    for (line, rec) in &rows.rows {
        let d = parse_date(&rec[0], *line)?;
        check_order(dates.last().copied(), d, *line)?;
        dates.push(d);
        for (k, name) in names.iter().enumerate() {
            cols[k].push(parse_f64(&rec[k + 1], *line, name)?);
        }
    }
    let mut frame = DailyFrame::new(dates)?;
    for (name, col) in names.iter().zip(cols) {
        frame.push(name, col)?;
    }
    Ok(frame)
}

pub fn write_macro<W: Write>(w: W, m: &MacroSeries) -> Result<()> {
    write_frame(w, &m.frame)
}

pub fn write_chain<W: Write>(w: W, chains: &[OptionChainSnapshot]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["date", "expiry", "strike", "kind", "delta", "gamma", "oi", "volume", "mid"])
        .map_err(csv_err)?;
    for s in chains {
        let date = s.date.format(DATE_FMT).to_string();
        for c in &s.contracts {
            wr.write_record([
                date.clone(),
                c.expiry.format(DATE_FMT).to_string(),
                fmt_f64(c.strike),
                c.kind.as_str().to_string(),
                fmt_f64(c.delta),
                fmt_f64(c.gamma),
                fmt_f64(c.open_interest),
                fmt_f64(c.volume),
                fmt_f64(c.mid),
            ])
            .map_err(csv_err)?;
        }
    }
    wr.flush().map_err(|e| csv_err(e.into()))
}

pub fn write_bars<W: Write>(w: W, bars: &IntradayBars) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["ts", "open", "high", "low", "close", "volume"])
        .map_err(csv_err)?;
    for b in &bars.bars {
        wr.write_record([
            b.ts.format(TS_FMT).to_string(),
            fmt_f64(b.open),
            fmt_f64(b.high),
            fmt_f64(b.low),
            fmt_f64(b.close),
            fmt_f64(b.volume),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| csv_err(e.into()))
}

// ---------------------------------------------------------------------------
// Synthetic market

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_days: usize,
    /// Trading-day indices of planted troughs; drawn from the seed when absent.
    pub trough_days: Option<Vec<usize>>,
    pub bars_per_session: usize,
    pub strikes_per_expiry: usize,
    pub start: NaiveDate,
}

impl SynthConfig {
    pub fn new(seed: u64, n_days: usize) -> Self {
        Self {
            seed,
            n_days,
            trough_days: None,
            bars_per_session: 60,
            strikes_per_expiry: 15,
            start: NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date"),
        }
    }
}

pub const MIN_SYNTH_DAYS: usize = 600;
const TICK: f64 = 0.25;
/// Length of the accelerating decline into a planted trough.
const CRASH_DAYS: f64 = 45.0;
const RECOVERY_TAU: f64 = 15.0;
const STRESS_TAU_PRE: f64 = 8.0;
const STRESS_TAU_POST: f64 = 4.0;

fn round_tick(x: f64) -> f64 {
    (x / TICK).round() * TICK
}

fn weekdays(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

fn normal<R: Rng>(r: &mut R) -> f64 {
    StandardNormal.sample(r)
}

/// Drawdown profile around a trough at offset `u` (negative before it).
fn crash_shape(u: f64) -> f64 {
    if u < -CRASH_DAYS {
        0.0
    } else if u <= 0.0 {
        ((u + CRASH_DAYS) / CRASH_DAYS).powi(2)
    } else {
        (-u / RECOVERY_TAU).exp()
    }
}

fn stress_bump(u: f64) -> f64 {
    if u <= 0.0 {
        (u / STRESS_TAU_PRE).exp()
    } else {
        (-u / STRESS_TAU_POST).exp()
    }
}

/// Implied-volatility multiplier by standardized moneyness, piecewise linear.
pub fn skew_multiplier(m: f64) -> f64 {
    const KNOTS: [(f64, f64); 5] = [(-2.0, 1.35), (-1.0, 1.15), (0.0, 1.0), (1.0, 0.92), (2.0, 0.9)];
    if m <= KNOTS[0].0 {
        return KNOTS[0].1;
    }
    for w in KNOTS.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if m <= x1 {
            return y0 + (y1 - y0) * (m - x0) / (x1 - x0);
        }
    }
    KNOTS[KNOTS.len() - 1].1
}

/// Black-76 price, delta and gamma with zero rates.
pub fn black76(f: f64, k: f64, tau: f64, vol: f64, kind: OptionKind) -> (f64, f64, f64) {
    let n = Normal::standard();
    let sd = vol * tau.sqrt();
    let d1 = ((f / k).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    let gamma = n.pdf(d1) / (f * sd);
    match kind {
        OptionKind::Call => (f * n.cdf(d1) - k * n.cdf(d2), n.cdf(d1), gamma),
        OptionKind::Put => (k * n.cdf(-d2) - f * n.cdf(-d1), n.cdf(d1) - 1.0, gamma),
    }
}

fn next_friday_on_or_after(d: NaiveDate) -> NaiveDate {
    let ahead = (7 + Weekday::Fri.num_days_from_monday() as i64
        - d.weekday().num_days_from_monday() as i64)
        % 7;
    d + Duration::days(ahead)
}

fn default_troughs<R: Rng>(r: &mut R, n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut t = 280 + r.random_range(0..40);
    while t + 60 < n {
        out.push(t);
        t += r.random_range(160..240);
    }
    out
}

pub fn generate_synthetic_market(cfg: &SynthConfig) -> Result<MarketBundle> {
    let n = cfg.n_days;
    if n < MIN_SYNTH_DAYS {
        return Err(Error::InvalidInput(format!(
            "synthetic market needs at least {MIN_SYNTH_DAYS} days, got {n}"
        )));
    }
    if cfg.bars_per_session < 2 || cfg.strikes_per_expiry < 5 {
        return Err(Error::InvalidInput("need >= 2 bars per session and >= 5 strikes".into()));
    }
    let dates = weekdays(cfg.start, n);
    let mut r_tr = rng::stream(cfg.seed, "troughs");
    let troughs = match &cfg.trough_days {
        Some(t) => {
            let mut t = t.clone();
            t.sort_unstable();
            if t.iter().any(|&x| x >= n) {
                return Err(Error::InvalidInput("planted trough beyond series end".into()));
            }
            t
        }
        None => default_troughs(&mut r_tr, n),
    };
    let depths: Vec<f64> = troughs.iter().map(|_| r_tr.random_range(0.15..0.30)).collect();

    let stress: Vec<f64> = (0..n)
        .map(|t| {
            troughs
                .iter()
                .map(|&tr| stress_bump(t as f64 - tr as f64))
                .fold(0.0, f64::max)
        })
        .collect();

    // Daily log price: drift, crash profiles and a mean-reverting level noise
    // whose volatility switches regime and rises with stress.
    let mut r_path = rng::stream(cfg.seed, "path");
    let mut turbulent = false;
    let mut x = 0.0;
    let mut sigma = vec![0.0; n];
    let mut closes = Vec::with_capacity(n);
    for t in 0..n {
        let p_switch = if turbulent { 0.05 } else { 0.004 + 0.2 * stress[t] };
        if r_path.random::<f64>() < p_switch {
            turbulent = !turbulent;
        }
        let regime = if turbulent { 1.8 } else { 1.0 };
        sigma[t] = 0.0035 * regime * (1.0 + 1.5 * stress[t]);
        x = 0.9 * x + sigma[t] * normal(&mut r_path);
        let crash: f64 = troughs
            .iter()
            .zip(&depths)
            .map(|(&tr, dp)| dp * crash_shape(t as f64 - tr as f64))
            .sum();
        let logp = 2000f64.ln() + 0.0006 * t as f64 + x - crash;
        closes.push(round_tick(logp.exp()));
    }
    let prices = DailySeries::new(dates.clone(), closes.clone())?;

    let log_ret: Vec<f64> = (0..n)
        .map(|t| if t == 0 { 0.0 } else { (closes[t] / closes[t - 1]).ln() })
        .collect();
    // Trailing 21-day realized volatility of daily closes, annualized.
    let trailing_vol: Vec<f64> = (0..n)
        .map(|t| {
            if t < 21 {
                sigma[t] * 252f64.sqrt() * 2.0
            } else {
                let w = &log_ret[t - 20..=t];
                let m = w.iter().sum::<f64>() / 21.0;
                let v = w.iter().map(|r| (r - m).powi(2)).sum::<f64>() / 20.0;
                (v.sqrt() * 252f64.sqrt()).max(0.05)
            }
        })
        .collect();

    let intraday_vol: Vec<f64> = (0..n)
        .map(|t| 0.008 * (sigma[t] / 0.0035) * (1.0 + stress[t]))
        .collect();
    let bars = synth_bars(cfg, &dates, &closes, &stress, &intraday_vol)?;
    let chains = synth_chains(cfg, &dates, &closes, &stress, &trailing_vol);
    let macro_series = synth_macro(cfg, &dates, &stress, &intraday_vol)?;
    Ok(MarketBundle {
        prices,
        chains,
        bars,
        macro_series,
        planted_troughs: troughs,
    })
}

fn synth_bars(
    cfg: &SynthConfig,
    dates: &[NaiveDate],
    closes: &[f64],
    stress: &[f64],
    intraday_vol: &[f64],
) -> Result<IntradayBars> {
    let nb = cfg.bars_per_session;
    let mut r = rng::stream(cfg.seed, "bars");
    let mut bars = Vec::with_capacity(dates.len() * nb);
    let mut path = vec![0.0; nb + 1];
    for (t, d) in dates.iter().enumerate() {
        let intraday_vol = intraday_vol[t];
        let prev = if t == 0 { closes[0] } else { closes[t - 1] };
        let open = round_tick(prev * (0.25 * intraday_vol * normal(&mut r)).exp());
        let (lo, lc) = (open.ln(), closes[t].ln());
        // Brownian bridge from the open to the pinned close.
        let step = intraday_vol / (nb as f64).sqrt();
        let mut w = 0.0;
        let mut walk = vec![0.0; nb + 1];
        for k in 1..=nb {
            w += step * normal(&mut r);
            walk[k] = w;
        }
        for k in 0..=nb {
            let frac = k as f64 / nb as f64;
            path[k] = lo + walk[k] - frac * walk[nb] + frac * (lc - lo);
        }
        let session_start = d.and_hms_opt(9, 30, 0).expect("valid time");
        let base_volume = 2000.0 * (1.0 + 2.0 * stress[t]);
        for k in 0..nb {
            let o = if k == 0 { open } else { round_tick(path[k].exp()) };
            let c = if k + 1 == nb { closes[t] } else { round_tick(path[k + 1].exp()) };
            let wick = step * 0.5;
            let high = round_tick(o.max(c) * (wick * normal(&mut r).abs()).exp()).max(o.max(c));
            let low = round_tick(o.min(c) * (-wick * normal(&mut r).abs()).exp()).min(o.min(c));
            let selling = if c < o { 1.0 + 1.5 * stress[t] } else { 1.0 };
            let volume = (base_volume * selling * (0.4 * normal(&mut r)).exp()).round();
            bars.push(Bar {
                ts: session_start + Duration::minutes(k as i64),
                open: o,
                high,
                low,
                close: c,
                volume,
            });
        }
    }
    Ok(IntradayBars { bars })
}

fn synth_chains(
    cfg: &SynthConfig,
    dates: &[NaiveDate],
    closes: &[f64],
    stress: &[f64],
    trailing_vol: &[f64],
) -> Vec<OptionChainSnapshot> {
    let mut r = rng::stream(cfg.seed, "chain");
    let ns = cfg.strikes_per_expiry;
    let mut out = Vec::with_capacity(dates.len());
    for (t, d) in dates.iter().enumerate() {
        let f = closes[t];
        let base_vol = trailing_vol[t];
        let front = next_friday_on_or_after(*d + Duration::days(14));
        let expiries = [front, front + Duration::days(28)];
        let oi_scale = (0.2 * normal(&mut r)).exp();
        let mut contracts = Vec::with_capacity(4 * ns);
        for e in expiries {
            let tau = (e - *d).num_days() as f64 / 365.0;
            let sd = base_vol * tau.sqrt();
            let mut strikes: Vec<f64> = (0..ns)
                .map(|i| {
                    let z = -3.5 + 7.0 * i as f64 / (ns - 1) as f64;
                    (f * (z * sd).exp() / 5.0).round() * 5.0
                })
                .collect();
            strikes.dedup();
            for &k in &strikes {
                let m = (k / f).ln() / sd;
                let vol = base_vol * skew_multiplier(m);
                for kind in [OptionKind::Call, OptionKind::Put] {
                    let (mid, delta, gamma) = black76(f, k, tau, vol, kind);
                    let (oi_base, tilt) = match kind {
                        OptionKind::Call => (1000.0 * (-0.5 * m * m).exp(), 1.0 - 0.3 * stress[t]),
                        OptionKind::Put => (
                            1200.0 * (-0.5 * (m + 0.5).powi(2)).exp(),
                            1.0 + 1.0 * stress[t],
                        ),
                    };
                    let oi = (oi_base * tilt * oi_scale * (0.1 * normal(&mut r)).exp()).round();
                    let volume = (0.3 * oi * (0.5 * normal(&mut r)).exp()).round();
                    contracts.push(OptionContract {
                        expiry: e,
                        strike: k,
                        kind,
                        delta: delta.clamp(-1.0, 1.0),
                        gamma: gamma.max(0.0),
                        open_interest: oi,
                        volume,
                        mid: mid.max(0.0),
                    });
                }
            }
        }
        out.push(OptionChainSnapshot {
            date: *d,
            contracts,
        });
    }
    out
}

fn synth_macro(
    cfg: &SynthConfig,
    dates: &[NaiveDate],
    stress: &[f64],
    intraday_vol: &[f64],
) -> Result<MacroSeries> {
    let n = dates.len();
    let mut r = rng::stream(cfg.seed, "macro");
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); MACRO_COLUMNS.len()];
    let (mut rf_dev, mut spread_dev, mut vix_dev) = (0.0, 0.0, 0.0);
    let mut effr: f64 = 1.0;
    let (mut eur, mut jpy) = (1.10f64.ln(), 0.0090f64.ln());
    // Smoothed stress drives slow-moving credit; implied vol tracks a smoothed
    // intraday vol with a premium.
    let mut slow = 0.0;
    let mut implied = intraday_vol[0];
    for t in 0..n {
        let s = stress[t];
        slow = 0.9 * slow + 0.1 * s;
        rf_dev = 0.995 * rf_dev + 0.0004 * normal(&mut r);
        let rf = (0.02 + rf_dev).max(0.001);
        spread_dev = 0.98 * spread_dev + 0.0008 * normal(&mut r);
        let spread = (0.045 + 0.05 * slow + spread_dev).max(0.01);
        if r.random::<f64>() < 0.004 + 0.03 * s {
            let cut = r.random::<f64>() < 0.3 + 0.6 * s;
            effr = (effr + if cut { -0.25 } else { 0.25 }).clamp(0.05, 6.0);
        }
        let implied1 = effr - 0.05 * s + 0.01 * normal(&mut r);
        let implied3 = effr - 0.35 * s + 0.03 * normal(&mut r);
        eur += 0.005 * normal(&mut r) - 0.002 * s;
        jpy += 0.006 * normal(&mut r) + 0.003 * s;
        implied = 0.85 * implied + 0.15 * intraday_vol[t];
        vix_dev = 0.97 * vix_dev + 0.6 * normal(&mut r);
        let vix = (1.15 * implied * 252f64.sqrt() * 100.0 + 10.0 * s + vix_dev).max(9.0);
        let row = [
            rf + spread,
            rf,
            effr,
            100.0 - implied1,
            100.0 - implied3,
            eur.exp(),
            jpy.exp(),
            vix,
        ];
        for (k, v) in row.into_iter().enumerate() {
            // Sparse single-day gaps in the rate series, as on data-vendor holidays.
            let gap = k < 3 && t > 0 && r.random::<f64>() < 0.01;
            cols[k].push(if gap { f64::NAN } else { v });
        }
    }
    let mut frame = DailyFrame::new(dates.to_vec())?;
    for (name, col) in MACRO_COLUMNS.iter().zip(cols) {
        frame.push(name, col)?;
    }
    Ok(MacroSeries { frame })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn daily_three_rows() {
        let (name, s) = read_daily("date,value\n2024-01-02,1\n2024-01-03,2.5\n2024-01-04,\n".as_bytes()).unwrap();
        assert_eq!(name, "value");
        assert_eq!(s.len(), 3);
        assert!(s.values()[2].is_nan());
    }

    #[test]
    fn duplicate_date_named() {
        let e = read_prices("date,close\n2024-01-02,1\n2024-01-02,2\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("2024-01-02"), "{e}");
        let e = read_prices("date,close\n2024-01-03,1\n2024-01-02,2\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Schema(_)));
    }

    #[test]
    fn malformed_row_reports_line() {
        let e = read_prices("date,close\n2024-01-02,1\n2024-01-03,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
    }

    #[test]
    fn header_mismatch() {
        assert!(matches!(read_prices("day,close\n".as_bytes()), Err(Error::Schema(_))));
    }

    #[test]
    fn put_delta_sign_rule() {
        let csv = "date,expiry,strike,kind,delta,gamma,oi,volume,mid\n2024-01-02,2024-02-16,100,put,0.3,0.01,5,1,2.0\n";
        assert!(matches!(read_chain(csv.as_bytes()), Err(Error::Validation(_))));
    }

    #[test]
    fn bad_bar_rejected() {
        let csv = "ts,open,high,low,close,volume\n2024-01-02 09:30,10,9,8,9.5,1\n";
        assert!(matches!(read_bars(csv.as_bytes()), Err(Error::Validation(_))));
    }

    #[test]
    fn forward_fill_limits() {
        let d = weekdays(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(), 9);
        let mut f = DailyFrame::new(d.clone()).unwrap();
        let mut v = vec![1.0; 9];
        v[2] = f64::NAN;
        f.push("vix", v).unwrap();
        let m = MacroSeries { frame: f };
        assert_eq!(m.filled().unwrap().column("vix").unwrap()[2], 1.0);
        let mut f = DailyFrame::new(d).unwrap();
        let mut v = vec![f64::NAN; 9];
        v[0] = 1.0;
        f.push("vix", v).unwrap();
        assert!(MacroSeries { frame: f }.filled().is_err());
    }

    #[test]
    fn skew_is_continuous_and_decreasing() {
        assert_eq!(skew_multiplier(-5.0), 1.35);
        assert_eq!(skew_multiplier(0.0), 1.0);
        assert!((skew_multiplier(-1.5) - 1.25).abs() < 1e-12);
        assert_eq!(skew_multiplier(9.0), 0.9);
    }

    #[test]
    fn put_call_parity() {
        let (c, dc, gc) = black76(100.0, 95.0, 0.1, 0.2, OptionKind::Call);
        let (p, dp, gp) = black76(100.0, 95.0, 0.1, 0.2, OptionKind::Put);
        assert!((c - p - 5.0).abs() < 1e-10);
        assert!((dc - dp - 1.0).abs() < 1e-12);
        assert_eq!(gc, gp);
    }

    #[test]
    fn too_short_market() {
        assert!(generate_synthetic_market(&SynthConfig::new(1, 599)).is_err());
    }
}
