//! Lasso on standardized columns, λ chosen by contiguous K-fold CV.
//!
//! Objective: 1/(2n)‖y − Xβ‖² + λ‖β‖₁. Coordinate descent runs in covariance
//! form on per-block sufficient statistics, so folds never revisit raw rows.

use super::{dot, Matrix};
use crate::error::{Error, Result};

pub const N_LAMBDAS: usize = 50;
pub const LAMBDA_DECADES: f64 = 4.0;
/// Duality-gap tolerance relative to the centered target second moment.
const GAP_TOL: f64 = 1e-7;
const MAX_SWEEPS: usize = 1_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoModel {
    pub intercept: f64,
    /// Coefficients on the raw column scale.
    pub coef: Vec<f64>,
    pub lambda: f64,
    pub lambdas: Vec<f64>,
    pub cv_mse: Vec<f64>,
}

impl LassoModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + dot(&self.coef, x)
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict(x.row(i))).collect()
    }
}

#[derive(Debug, Clone)]
struct Stats {
    n: f64,
    sx: Vec<f64>,
    sy: f64,
    syy: f64,
    sxx: Vec<f64>,
    sxy: Vec<f64>,
}

impl Stats {
    fn zeros(d: usize) -> Self {
        Self {
            n: 0.0,
            sx: vec![0.0; d],
            sy: 0.0,
            syy: 0.0,
            sxx: vec![0.0; d * d],
            sxy: vec![0.0; d],
        }
    }

    fn add_row(&mut self, x: &[f64], y: f64) {
        let d = x.len();
        self.n += 1.0;
        self.sy += y;
        self.syy += y * y;
        for j in 0..d {
            self.sx[j] += x[j];
            self.sxy[j] += x[j] * y;
            let row = &mut self.sxx[j * d..j * d + j + 1];
            for (k, s) in row.iter_mut().enumerate() {
                *s += x[j] * x[k];
            }
        }
    }

    fn combine(&mut self, other: &Stats, sign: f64) {
        self.n += sign * other.n;
        self.sy += sign * other.sy;
        self.syy += sign * other.syy;
        for (a, b) in self.sx.iter_mut().zip(&other.sx) {
            *a += sign * b;
        }
        for (a, b) in self.sxy.iter_mut().zip(&other.sxy) {
            *a += sign * b;
        }
        for (a, b) in self.sxx.iter_mut().zip(&other.sxx) {
            *a += sign * b;
        }
    }
}

/// Standardized problem: Gram `g`, correlation vector `c`, scaling info.
struct Problem {
    d: usize,
    g: Vec<f64>,
    c: Vec<f64>,
    mu: Vec<f64>,
    sd: Vec<f64>,
    ybar: f64,
    /// Centered target second moment per row.
    yy: f64,
    active: Vec<bool>,
}

impl Problem {
    fn new(s: &Stats) -> Self {
        let d = s.sx.len();
        let n = s.n;
        let mu: Vec<f64> = s.sx.iter().map(|v| v / n).collect();
        let ybar = s.sy / n;
        let yy = (s.syy / n - ybar * ybar).max(0.0);
        let mut cov = vec![0.0; d * d];
        for j in 0..d {
            for k in 0..=j {
                let v = s.sxx[j * d + k] / n - mu[j] * mu[k];
                cov[j * d + k] = v;
                cov[k * d + j] = v;
            }
        }
        let sd: Vec<f64> = (0..d).map(|j| cov[j * d + j].max(0.0).sqrt()).collect();
        let active: Vec<bool> = sd.iter().map(|&v| v > 1e-12).collect();
        let mut g = vec![0.0; d * d];
        let mut c = vec![0.0; d];
        for j in 0..d {
            if !active[j] {
                continue;
            }
            c[j] = (s.sxy[j] / n - mu[j] * ybar) / sd[j];
            for k in 0..d {
                if active[k] {
                    g[j * d + k] = cov[j * d + k] / (sd[j] * sd[k]);
                }
            }
        }
        Self {
            d,
            g,
            c,
            mu,
            sd,
            ybar,
            yy,
            active,
        }
    }

    fn lambda_max(&self) -> f64 {
        self.c.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Coordinate descent from the warm start `beta`. Sweeps cycle over the
    /// nonzero coordinates until they settle, then one full sweep checks
    /// whether the support changed.
    fn solve(&self, lambda: f64, beta: &mut [f64]) {
        let d = self.d;
        let mut q = vec![0.0; d];
        for j in 0..d {
            if beta[j] != 0.0 {
                let gj = &self.g[j * d..(j + 1) * d];
                for (qk, g) in q.iter_mut().zip(gj) {
                    *qk += g * beta[j];
                }
            }
        }
        let all: Vec<usize> = (0..d).filter(|&j| self.active[j]).collect();
        let tol = GAP_TOL * self.yy.max(1e-300);
        let mut sweeps = 0;
        while sweeps < MAX_SWEEPS {
            let changed = self.sweep(lambda, beta, &mut q, &all);
            sweeps += 1;
            if changed == 0.0 || self.gap(lambda, beta, &q) <= tol {
                break;
            }
            let support: Vec<usize> = all.iter().copied().filter(|&j| beta[j] != 0.0).collect();
            while sweeps < MAX_SWEEPS {
                let delta = self.sweep(lambda, beta, &mut q, &support);
                sweeps += 1;
                if delta <= 1e-3 * changed.max(1e-12) {
                    break;
                }
            }
        }
    }

    /// One pass over `coords`; returns the largest coefficient change.
    fn sweep(&self, lambda: f64, beta: &mut [f64], q: &mut [f64], coords: &[usize]) -> f64 {
        let d = self.d;
        let mut max_delta: f64 = 0.0;
        for &j in coords {
            let gj = &self.g[j * d..(j + 1) * d];
            let gjj = gj[j];
            let rho = self.c[j] - q[j] + gjj * beta[j];
            let new = soft(rho, lambda) / gjj;
            let delta = new - beta[j];
            if delta != 0.0 {
                for (qk, g) in q.iter_mut().zip(gj) {
                    *qk += g * delta;
                }
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        max_delta
    }

    /// Duality gap of the standardized problem; `q` is G·β.
    fn gap(&self, lambda: f64, beta: &[f64], q: &[f64]) -> f64 {
        let cb = dot(&self.c, beta);
        let r2 = (self.yy - 2.0 * cb + dot(beta, q)).max(0.0);
        let dual_norm = self
            .c
            .iter()
            .zip(q)
            .fold(0.0f64, |m, (c, g)| m.max((c - g).abs()));
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        let (scale, gap) = if dual_norm > lambda {
            let k = lambda / dual_norm;
            (k, 0.5 * r2 * (1.0 + k * k))
        } else {
            (1.0, r2)
        };
        gap + lambda * l1 - scale * (self.yy - cb)
    }

    fn raw(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        let coef: Vec<f64> = (0..self.d)
            .map(|j| if self.active[j] { beta[j] / self.sd[j] } else { 0.0 })
            .collect();
        let intercept = self.ybar - dot(&coef, &self.mu);
        (intercept, coef)
    }
}

fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn lambda_grid(lambda_max: f64) -> Vec<f64> {
    (0..N_LAMBDAS)
        .map(|k| lambda_max * 10f64.powf(-LAMBDA_DECADES * k as f64 / (N_LAMBDAS - 1) as f64))
        .collect()
}

/// Lasso at a single λ, no cross-validation.
pub fn fit_lasso(x: &Matrix, y: &[f64], lambda: f64) -> Result<LassoModel> {
    check(x, y, 1)?;
    let mut s = Stats::zeros(x.cols());
    for i in 0..x.rows() {
        s.add_row(x.row(i), y[i]);
    }
    let p = Problem::new(&s);
    let mut beta = vec![0.0; x.cols()];
    p.solve(lambda, &mut beta);
    let (intercept, coef) = p.raw(&beta);
    Ok(LassoModel {
        intercept,
        coef,
        lambda,
        lambdas: vec![lambda],
        cv_mse: Vec::new(),
    })
}

fn check(x: &Matrix, y: &[f64], min_rows: usize) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::InvalidInput("row/target count mismatch".into()));
    }
    if x.rows() < min_rows.max(2) {
        return Err(Error::InvalidInput(format!("lasso needs at least {min_rows} rows")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite lasso target".into()));
    }
    Ok(())
}

pub fn fit_lasso_cv(x: &Matrix, y: &[f64], folds: usize) -> Result<LassoModel> {
    if folds < 2 {
        return Err(Error::InvalidInput("lasso CV needs at least two folds".into()));
    }
    check(x, y, 2 * folds)?;
    let n = x.rows();
    let d = x.cols();
    // Center before accumulating to limit cancellation.
    let xbar: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64).collect();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let bounds: Vec<(usize, usize)> = (0..folds).map(|k| (k * n / folds, (k + 1) * n / folds)).collect();
    let mut blocks = Vec::with_capacity(folds);
    let mut total = Stats::zeros(d);
    let mut buf = vec![0.0; d];
    for &(a, b) in &bounds {
        let mut s = Stats::zeros(d);
        for i in a..b {
            for (v, (xi, m)) in buf.iter_mut().zip(x.row(i).iter().zip(&xbar)) {
                *v = xi - m;
            }
            s.add_row(&buf, y[i] - ybar);
        }
        total.combine(&s, 1.0);
        blocks.push(s);
    }
    let full = Problem::new(&total);
    let lambdas = lambda_grid(full.lambda_max());
    let mut cv_mse = vec![0.0; lambdas.len()];
    for (k, &(a, b)) in bounds.iter().enumerate() {
        let mut train = total.clone();
        train.combine(&blocks[k], -1.0);
        let p = Problem::new(&train);
        let mut beta = vec![0.0; d];
        for (l, &lam) in lambdas.iter().enumerate() {
            p.solve(lam, &mut beta);
            let (ic, coef) = p.raw(&beta);
            let mut sse = 0.0;
            for i in a..b {
                let mut pred = ic;
                for (j, cj) in coef.iter().enumerate() {
                    pred += cj * (x.get(i, j) - xbar[j]);
                }
                sse += (y[i] - ybar - pred).powi(2);
            }
            cv_mse[l] += sse / (b - a) as f64 / folds as f64;
        }
    }
    let best = (0..lambdas.len()).fold(0, |b, l| if cv_mse[l] < cv_mse[b] { l } else { b });
    let mut beta = vec![0.0; d];
    for &lam in &lambdas[..=best] {
        full.solve(lam, &mut beta);
    }
    let (ic, coef) = full.raw(&beta);
    let intercept = ic + ybar - dot(&coef, &xbar);
    Ok(LassoModel {
        intercept,
        coef,
        lambda: lambdas[best],
        lambdas,
        cv_mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Matrix, Vec<f64>) {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let a = (i as f64 * 0.37).sin();
                let b = (i as f64 * 1.3).cos();
                vec![a, b]
            })
            .collect();
        let y = rows.iter().map(|r| 2.0 * r[0] - r[1] + 1.0).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn huge_lambda_zeroes_everything() {
        let (x, y) = toy();
        let m = fit_lasso(&x, &y, 1e9).unwrap();
        assert!(m.coef.iter().all(|&c| c == 0.0));
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        assert!((m.intercept - ybar).abs() < 1e-12);
    }

    #[test]
    fn cv_recovers_noiseless_linear_model() {
        let (x, y) = toy();
        let m = fit_lasso_cv(&x, &y, 5).unwrap();
        assert!((m.coef[0] - 2.0).abs() < 1e-2, "{:?}", m.coef);
        assert!((m.coef[1] + 1.0).abs() < 1e-2);
        assert!((m.intercept - 1.0).abs() < 1e-2);
        assert_eq!(m.lambdas.len(), N_LAMBDAS);
    }
}
