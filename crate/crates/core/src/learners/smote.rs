use rand::Rng;

use super::Matrix;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_K: usize = 5;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Synthetic minority rows interpolated towards one of the `k` nearest
/// minority neighbours. Produces `round(factor * (n_majority - n_minority))` rows.
pub fn smote(
    minority: &Matrix,
    n_majority: usize,
    factor: f64,
    k: usize,
    seed: u64,
) -> Result<Matrix> {
    let m = minority.rows();
    let gap = n_majority.saturating_sub(m) as f64;
    let count = (factor * gap).round() as usize;
    if count == 0 {
        return Ok(Matrix::zeros(0, minority.cols()));
    }
    if k == 0 || m <= k {
        return Err(Error::InvalidInput(format!(
            "SMOTE needs more than {k} minority rows, got {m}"
        )));
    }
    let neighbours: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..m)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(minority.row(i), minority.row(j)), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect();
    let mut r = rng::stream(seed, "smote");
    let d = minority.cols();
    let mut data = Vec::with_capacity(count * d);
    for _ in 0..count {
        let i = r.random_range(0..m);
        let j = neighbours[i][r.random_range(0..k)];
        let lambda: f64 = r.random();
        let (a, b) = (minority.row(i), minority.row(j));
        data.extend(a.iter().zip(b).map(|(x, y)| x + lambda * (y - x)));
    }
    Matrix::new(count, d, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_factor_makes_nothing() {
        let m = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(smote(&m, 10, 0.0, 1, 1).unwrap().rows(), 0);
    }

    #[test]
    fn points_on_segment() {
        let m = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 1.0]]).unwrap();
        let s = smote(&m, 50, 1.0, 1, 3).unwrap();
        assert_eq!(s.rows(), 48);
        for i in 0..s.rows() {
            let r = s.row(i);
            assert!((r[1] - r[0] / 2.0).abs() < 1e-12);
            assert!((0.0..=2.0).contains(&r[0]));
        }
    }

    #[test]
    fn replay_and_errors() {
        let m = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(smote(&m, 20, 1.0, 2, 9).unwrap(), smote(&m, 20, 1.0, 2, 9).unwrap());
        assert!(smote(&m, 20, 1.0, 3, 9).is_err());
    }
}
