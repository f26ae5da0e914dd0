use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tree::{fit_tree, Binned, RegressionTree, TreeParams};
use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GbmParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self {
            rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
        }
    }
}

/// Least-squares gradient boosting of depth-limited trees.
#[derive(Debug, Clone)]
pub struct BoostedRegressor {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
}

impl BoostedRegressor {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict(x.row(i))).collect()
    }
}

pub fn fit_gbm(x: &Matrix, y: &[f64], params: &GbmParams, seed: u64) -> Result<BoostedRegressor> {
    let n = x.rows();
    if n < 2 || n != y.len() {
        return Err(Error::InvalidInput("boosting needs at least two matching rows".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite boosting target".into()));
    }
    let binned = Binned::new(x);
    let init = y.iter().sum::<f64>() / n as f64;
    let mut f = vec![init; n];
    let tp = TreeParams {
        max_depth: Some(params.max_depth),
        min_leaf: 1,
        mtry: None,
    };
    // All features are examined at every split, so the generator only orders ties.
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut imp = vec![0.0; x.cols()];
    let mut trees = Vec::with_capacity(params.rounds);
    let mut resid = vec![0.0; n];
    for _ in 0..params.rounds {
        for i in 0..n {
            resid[i] = y[i] - f[i];
        }
        let tree = fit_tree(&binned, &resid, (0..n as u32).collect(), &tp, &mut r, &mut imp);
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += params.learning_rate * tree.predict(x.row(i));
        }
        trees.push(tree);
    }
    Ok(BoostedRegressor {
        init,
        learning_rate: params.learning_rate,
        trees,
    })
}
