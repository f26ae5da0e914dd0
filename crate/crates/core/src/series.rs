//! Date-indexed numeric containers shared by every stage.
//!
//! Missing observations are stored as `NaN`.

use chrono::NaiveDate;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

fn check_dates(dates: &[NaiveDate]) -> Result<()> {
    for w in dates.windows(2) {
        if w[1] == w[0] {
            return Err(Error::Schema(format!("duplicate date {}", w[0])));
        }
        if w[1] < w[0] {
            return Err(Error::Schema(format!("dates not ascending at {}", w[1])));
        }
    }
    Ok(())
}

impl DailySeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} dates but {} values",
                dates.len(),
                values.len()
            )));
        }
        check_dates(&dates)?;
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::Validation("infinite value in series".into()));
        }
        Ok(Self { dates, values })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.dates.binary_search(&date).ok().map(|i| self.values[i])
    }

    pub fn position(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Keeps observations dated on or before `end`.
    pub fn truncate_after(&self, end: NaiveDate) -> Self {
        let n = self.dates.partition_point(|d| *d <= end);
        Self {
            dates: self.dates[..n].to_vec(),
            values: self.values[..n].to_vec(),
        }
    }

    /// Values re-indexed onto `dates`; absent dates become missing.
    pub fn reindex(&self, dates: &[NaiveDate]) -> Vec<f64> {
        dates
            .iter()
            .map(|d| self.get(*d).unwrap_or(f64::NAN))
            .collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dates: self.dates.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }
}

/// Several series sharing one date index, columns in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyFrame {
    dates: Vec<NaiveDate>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl DailyFrame {
    pub fn new(dates: Vec<NaiveDate>) -> Result<Self> {
        check_dates(&dates)?;
        Ok(Self {
            dates,
            names: Vec::new(),
            columns: Vec::new(),
        })
    }

    pub fn push(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.dates.len() {
            return Err(Error::InvalidInput(format!(
                "column {name} has {} rows, frame has {}",
                values.len(),
                self.dates.len()
            )));
        }
        if self.names.iter().any(|n| n == name) {
            return Err(Error::InvalidInput(format!("duplicate column {name}")));
        }
        self.names.push(name.to_string());
        self.columns.push(values);
        Ok(())
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn series(&self, name: &str) -> Option<DailySeries> {
        self.column(name).map(|c| DailySeries {
            dates: self.dates.clone(),
            values: c.to_vec(),
        })
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names
            .iter()
            .zip(&self.columns)
            .map(|(n, c)| (n.as_str(), c.as_slice()))
    }

    pub fn truncate_after(&self, end: NaiveDate) -> Self {
        let n = self.dates.partition_point(|d| *d <= end);
        Self {
            dates: self.dates[..n].to_vec(),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[..n].to_vec()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, day).unwrap()
    }

    #[test]
    fn rejects_duplicates_and_disorder() {
        assert!(DailySeries::new(vec![d(2), d(2)], vec![1.0, 2.0]).is_err());
        assert!(DailySeries::new(vec![d(3), d(2)], vec![1.0, 2.0]).is_err());
        assert!(DailySeries::new(vec![d(2), d(3)], vec![1.0, f64::NAN]).is_ok());
    }

    #[test]
    fn truncate_and_reindex() {
        let s = DailySeries::new(vec![d(2), d(3), d(4)], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.truncate_after(d(3)).values(), &[1.0, 2.0]);
        let r = s.reindex(&[d(1), d(4)]);
        assert!(r[0].is_nan());
        assert_eq!(r[1], 3.0);
    }
}
