use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{fit_tree, Binned, RegressionTree, TreeParams};
use super::Matrix;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: None,
            min_leaf: 1,
        }
    }
}

/// Bagged classification trees; class-1 probability is the mean leaf frequency.
#[derive(Debug, Clone)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    importance: Vec<f64>,
}

impl ForestModel {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Mean decrease in Gini impurity per feature, normalized to sum to one.
    pub fn gini_importance(&self) -> &[f64] {
        &self.importance
    }

    /// Feature indices by decreasing importance; ties keep column order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.importance.len()).collect();
        idx.sort_by(|&a, &b| self.importance[b].total_cmp(&self.importance[a]).then(a.cmp(&b)));
        idx
    }
}

pub fn fit_forest(x: &Matrix, y: &[u8], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    let n = x.rows();
    if n == 0 || n != y.len() {
        return Err(Error::InvalidInput("forest needs matching non-empty data".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidInput("forest needs at least one tree".into()));
    }
    let d = x.cols();
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let binned = Binned::new(x);
    let tp = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        mtry: Some(((d as f64).sqrt().floor() as usize).max(1)),
    };
    let base = rng::derive(seed, "forest");
    let fitted: Vec<(RegressionTree, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = ChaCha8Rng::seed_from_u64(rng::derive_index(base, t as u64));
            let rows: Vec<u32> = (0..n).map(|_| r.random_range(0..n as u32)).collect();
            let mut imp = vec![0.0; d];
            let tree = fit_tree(&binned, &yf, rows, &tp, &mut r, &mut imp);
            let s: f64 = imp.iter().sum();
            if s > 0.0 {
                imp.iter_mut().for_each(|v| *v /= s);
            }
            (tree, imp)
        })
        .collect();
    let mut importance = vec![0.0; d];
    let mut trees = Vec::with_capacity(fitted.len());
    for (tree, imp) in fitted {
        for (a, b) in importance.iter_mut().zip(&imp) {
            *a += b;
        }
        trees.push(tree);
    }
    let s: f64 = importance.iter().sum();
    if s > 0.0 {
        importance.iter_mut().for_each(|v| *v /= s);
    }
    Ok(ForestModel { trees, importance })
}
