use crate::error::{Error, Result};

/// Nondecreasing piecewise-linear map from raw scores to probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicCalibrator {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Weighted pool-adjacent-violators on already-ordered targets.
pub fn pava(y: &[f64], w: &[f64]) -> Vec<f64> {
    // Each block: (weighted mean, total weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&v, &wt) in y.iter().zip(w) {
        blocks.push((v, wt, 1));
        while blocks.len() > 1 {
            let (m2, w2, n2) = blocks[blocks.len() - 1];
            let (m1, w1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let tw = w1 + w2;
            *blocks.last_mut().unwrap() = ((m1 * w1 + m2 * w2) / tw, tw, n1 + n2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, n)| std::iter::repeat_n(m, n))
        .collect()
}

pub fn fit_isotonic(scores: &[f64], outcomes: &[f64]) -> Result<IsotonicCalibrator> {
    if scores.len() != outcomes.len() {
        return Err(Error::InvalidInput("score/outcome length mismatch".into()));
    }
    if scores.len() < 2 {
        return Err(Error::InvalidInput("isotonic fit needs at least two points".into()));
    }
    if scores.iter().chain(outcomes).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite isotonic input".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Pool tied scores into one weighted point.
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for &i in &order {
        match xs.last() {
            Some(&last) if last == scores[i] => {
                let k = ys.len() - 1;
                ys[k] = (ys[k] * ws[k] + outcomes[i]) / (ws[k] + 1.0);
                ws[k] += 1.0;
            }
            _ => {
                xs.push(scores[i]);
                ys.push(outcomes[i]);
                ws.push(1.0);
            }
        }
    }
    let fitted = pava(&ys, &ws);
    // Keep only block endpoints; interpolation is unchanged.
    let mut bx = Vec::new();
    let mut by = Vec::new();
    for i in 0..xs.len() {
        let first = i == 0 || fitted[i - 1] != fitted[i];
        let last = i + 1 == xs.len() || fitted[i + 1] != fitted[i];
        if first || last {
            bx.push(xs[i]);
            by.push(fitted[i]);
        }
    }
    Ok(IsotonicCalibrator { x: bx, y: by })
}

impl IsotonicCalibrator {
    pub fn predict(&self, s: f64) -> f64 {
        let n = self.x.len();
        let v = if s <= self.x[0] {
            self.y[0]
        } else if s >= self.x[n - 1] {
            self.y[n - 1]
        } else {
            let k = self.x.partition_point(|&v| v <= s);
            let (x0, x1) = (self.x[k - 1], self.x[k]);
            let (y0, y1) = (self.y[k - 1], self.y[k]);
            y0 + (y1 - y0) * (s - x0) / (x1 - x0)
        };
        v.clamp(0.0, 1.0)
    }

    pub fn predict_all(&self, s: &[f64]) -> Vec<f64> {
        s.iter().map(|&v| self.predict(v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pools_violators() {
        assert_eq!(pava(&[3.0, 1.0, 2.0], &[1.0; 3]), vec![2.0, 2.0, 2.0]);
        assert_eq!(pava(&[1.0, 2.0, 5.0], &[1.0; 3]), vec![1.0, 2.0, 5.0]);
    }

    #[test]
    fn interpolates_and_clamps() {
        let c = fit_isotonic(&[0.0, 1.0, 2.0, 3.0], &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(c.predict(-5.0), 0.0);
        assert_eq!(c.predict(1.5), 0.5);
        assert_eq!(c.predict(9.0), 1.0);
        let wild = fit_isotonic(&[0.0, 1.0], &[-2.0, 3.0]).unwrap();
        assert_eq!(wild.predict(-1.0), 0.0);
        assert_eq!(wild.predict(2.0), 1.0);
    }

    #[test]
    fn ties_are_pooled() {
        let c = fit_isotonic(&[1.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap();
        assert_eq!(c.predict(1.0), 0.5);
    }
}
