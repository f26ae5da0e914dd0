use super::Matrix;
use crate::error::{Error, Result};

/// Variance floor relative to the largest feature variance.
pub const VAR_SMOOTHING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayesModel {
    pub log_prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

pub fn fit_gnb(x: &Matrix, y: &[u8]) -> Result<NaiveBayesModel> {
    if x.rows() != y.len() || x.rows() == 0 {
        return Err(Error::InvalidInput("naive Bayes needs matching non-empty data".into()));
    }
    let d = x.cols();
    let mut max_var: f64 = 0.0;
    for j in 0..d {
        let c = x.column(j);
        let m = c.iter().sum::<f64>() / c.len() as f64;
        max_var = max_var.max(c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / c.len() as f64);
    }
    let eps = VAR_SMOOTHING * max_var.max(f64::MIN_POSITIVE);
    let mut mean = [vec![0.0; d], vec![0.0; d]];
    let mut var = [vec![0.0; d], vec![0.0; d]];
    let mut count = [0usize; 2];
    for (i, &label) in y.iter().enumerate() {
        let k = usize::from(label == 1);
        count[k] += 1;
        for (m, v) in mean[k].iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    if count[0] == 0 || count[1] == 0 {
        return Err(Error::InvalidInput("naive Bayes needs both classes".into()));
    }
    for k in 0..2 {
        mean[k].iter_mut().for_each(|m| *m /= count[k] as f64);
    }
    for (i, &label) in y.iter().enumerate() {
        let k = usize::from(label == 1);
        for j in 0..d {
            var[k][j] += (x.get(i, j) - mean[k][j]).powi(2);
        }
    }
    for k in 0..2 {
        var[k].iter_mut().for_each(|v| *v = *v / count[k] as f64 + eps);
    }
    let n = y.len() as f64;
    Ok(NaiveBayesModel {
        log_prior: [(count[0] as f64 / n).ln(), (count[1] as f64 / n).ln()],
        mean,
        var,
    })
}

impl NaiveBayesModel {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let ll = |k: usize| -> f64 {
            self.log_prior[k]
                + x.iter()
                    .zip(self.mean[k].iter().zip(&self.var[k]))
                    .map(|(v, (m, s))| {
                        -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + (v - m).powi(2) / s)
                    })
                    .sum::<f64>()
        };
        let (l0, l1) = (ll(0), ll(1));
        let m = l0.max(l1);
        let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
        e1 / (e0 + e1)
    }
}
