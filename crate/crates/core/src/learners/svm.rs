//! Soft-margin linear SVM with an unpenalized bias, trained by SMO on the dual.

use super::{dot, Matrix};
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-6;
const TAU: f64 = 1e-12;
/// Gram matrices above this many rows are not cached.
const GRAM_LIMIT: usize = 6000;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
    /// Primal objective at (w, b) on the training data.
    pub objective: f64,
}

impl LinearClassifier {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }

    pub fn decision_matrix(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.decision(x.row(i))).collect()
    }
}

fn signed_labels(y: &[u8]) -> Result<Vec<f64>> {
    let ys: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
    let pos = ys.iter().filter(|&&v| v > 0.0).count();
    if pos == 0 || pos == ys.len() {
        return Err(Error::InvalidInput("SVM needs both classes".into()));
    }
    Ok(ys)
}

/// ½‖w‖² + C Σ max(0, 1 − y(w·x + b)).
pub fn primal_objective(x: &Matrix, y: &[u8], w: &[f64], b: f64, c: f64) -> f64 {
    let hinge: f64 = (0..x.rows())
        .map(|i| {
            let s = if y[i] == 1 { 1.0 } else { -1.0 };
            (1.0 - s * (dot(w, x.row(i)) + b)).max(0.0)
        })
        .sum();
    0.5 * dot(w, w) + c * hinge
}

/// Bias minimizing the total hinge loss for fixed scores `s = w·x`.
/// The loss is convex piecewise linear; its slope rises by one at every
/// breakpoint starting from minus the positive count.
pub fn optimal_bias(scores: &[f64], ys: &[f64]) -> f64 {
    let mut bp: Vec<f64> = scores
        .iter()
        .zip(ys)
        .map(|(s, y)| if *y > 0.0 { 1.0 - s } else { -1.0 - s })
        .collect();
    bp.sort_by(f64::total_cmp);
    let p = ys.iter().filter(|&&v| v > 0.0).count();
    let lo = bp[p - 1];
    let hi = if p < bp.len() { bp[p] } else { lo };
    0.5 * (lo + hi)
}

struct Kernel<'a> {
    x: &'a Matrix,
    gram: Option<Vec<f64>>,
    diag: Vec<f64>,
}

impl<'a> Kernel<'a> {
    fn new(x: &'a Matrix) -> Self {
        let n = x.rows();
        let diag: Vec<f64> = (0..n).map(|i| dot(x.row(i), x.row(i))).collect();
        let gram = (n <= GRAM_LIMIT).then(|| {
            let mut g = vec![0.0; n * n];
            for i in 0..n {
                g[i * n + i] = diag[i];
                for j in 0..i {
                    let v = dot(x.row(i), x.row(j));
                    g[i * n + j] = v;
                    g[j * n + i] = v;
                }
            }
            g
        });
        Self { x, gram, diag }
    }

    fn row(&self, i: usize, buf: &mut Vec<f64>) {
        let n = self.x.rows();
        buf.clear();
        match &self.gram {
            Some(g) => buf.extend_from_slice(&g[i * n..(i + 1) * n]),
            None => buf.extend((0..n).map(|j| dot(self.x.row(i), self.x.row(j)))),
        }
    }
}

fn weights(x: &Matrix, ys: &[f64], alpha: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        if alpha[i] != 0.0 {
            let a = alpha[i] * ys[i];
            for (wk, xk) in w.iter_mut().zip(x.row(i)) {
                *wk += a * xk;
            }
        }
    }
    w
}

/// Fits the linear SVM; stops when the relative duality gap falls below `tol`.
pub fn fit_linear_svm(x: &Matrix, y: &[u8], c: f64) -> Result<LinearClassifier> {
    fit_linear_svm_tol(x, y, c, DEFAULT_TOL)
}

pub fn fit_linear_svm_tol(x: &Matrix, y: &[u8], c: f64, tol: f64) -> Result<LinearClassifier> {
    if x.rows() != y.len() {
        return Err(Error::InvalidInput("row/label count mismatch".into()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidInput(format!("C must be positive, got {c}")));
    }
    let ys = signed_labels(y)?;
    let n = x.rows();
    let k = Kernel::new(x);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut ki = Vec::with_capacity(n);
    let mut kj = Vec::with_capacity(n);
    let max_iter = (100 * n).max(10_000_000);
    let check_every = n.clamp(64, 2048);

    for iter in 0..max_iter {
        // Maximal violating pair with second-order selection of j.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let up = (ys[t] > 0.0 && alpha[t] < c) || (ys[t] < 0.0 && alpha[t] > 0.0);
            if up && -ys[t] * grad[t] > gmax {
                gmax = -ys[t] * grad[t];
                i_sel = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        if i_sel != usize::MAX {
            k.row(i_sel, &mut ki);
            for t in 0..n {
                let low = (ys[t] < 0.0 && alpha[t] < c) || (ys[t] > 0.0 && alpha[t] > 0.0);
                if !low {
                    continue;
                }
                let v = -ys[t] * grad[t];
                gmin = gmin.min(v);
                let bdiff = gmax - v;
                if bdiff > 0.0 {
                    let mut a = k.diag[i_sel] + k.diag[t] - 2.0 * ki[t];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let obj = -(bdiff * bdiff) / a;
                    if obj < best {
                        best = obj;
                        j_sel = t;
                    }
                }
            }
        }
        let converged_kkt = j_sel == usize::MAX || gmax - gmin < 1e-12;
        if converged_kkt || (iter > 0 && iter % check_every == 0) {
            let w = weights(x, &ys, &alpha);
            let scores = x_scores(x, &w);
            let b = optimal_bias(&scores, &ys);
            let primal = primal_objective(x, y, &w, b, c);
            let dual = alpha.iter().sum::<f64>() - 0.5 * dot(&w, &w);
            if converged_kkt || primal - dual <= tol * primal.abs().max(1e-300) {
                return Ok(LinearClassifier {
                    w,
                    b,
                    c,
                    objective: primal,
                });
            }
        }
        let (i, j) = (i_sel, j_sel);
        k.row(j, &mut kj);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if ys[i] != ys[j] {
            let mut quad = k.diag[i] + k.diag[j] - 2.0 * ki[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = k.diag[i] + k.diag[j] - 2.0 * ki[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += ys[t] * (ys[i] * ki[t] * di + ys[j] * kj[t] * dj);
        }
    }
    Err(Error::Numerical("SVM solver hit the iteration cap".into()))
}

fn x_scores(x: &Matrix, w: &[f64]) -> Vec<f64> {
    (0..x.rows()).map(|i| dot(w, x.row(i))).collect()
}
