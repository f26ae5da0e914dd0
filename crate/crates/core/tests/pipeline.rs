mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use troughcast::featlab::FeatureMatrix;
use troughcast::learners::{fit_isotonic, ForestParams, Matrix};
use troughcast::pipeline::*;

fn planted(seed: u64, n: usize, d: usize, signal: usize) -> FeatureMatrix {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<u8> = (0..n).map(|_| u8::from(r.random::<f64>() < 0.12)).collect();
    let mut data = Vec::with_capacity(n * d);
    for &l in &labels {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut r);
            data.push(if j == signal { 2.0 * f64::from(l) + 0.6 * z } else { z });
        }
    }
    FeatureMatrix {
        dates: common::calendar(n),
        names: (0..d).map(|j| format!("f{j}")).collect(),
        x: Matrix::new(n, d, data).unwrap(),
        labels,
    }
}

fn small_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(seed);
    cfg.search = SearchSpace {
        n_features: vec![2, 4],
        c_values: vec![0.01, 1.0],
        ..SearchSpace::default()
    };
    cfg.forest = ForestParams {
        n_trees: 30,
        ..ForestParams::default()
    };
    cfg
}

#[test]
fn planted_column_is_selected_and_scores_well() {
    let fm = planted(1, 700, 10, 6);
    let (p, cv) = run_nested_cv(&fm, &small_config(3)).unwrap();
    assert!(p.features.contains(&"f6".to_string()), "{:?}", p.features);
    assert!(p.features.iter().all(|f| fm.names.contains(f)));
    assert!(cv.nested_auc().unwrap() > 0.9);
    let test = planted(2, 300, 10, 6);
    let r = evaluate(&p, &test).unwrap();
    assert!(r.roc_auc > 0.9 && r.brier < 0.1, "{} {}", r.roc_auc, r.brier);
    assert!((0.0..=1.0).contains(&r.roc_auc) && (0.0..=1.0).contains(&r.brier));
}

#[test]
fn folds_never_see_their_future() {
    let fm = planted(4, 600, 8, 2);
    let cfg = small_config(5);
    let cv = cross_validate(&fm, &cfg).unwrap();
    for (k, f) in cv.plan.outer.iter().enumerate() {
        assert!(f.train.end <= f.val.start);
        for inner in &cv.plan.inner[k] {
            assert!(inner.train.end <= inner.val.start && inner.val.end <= f.train.end);
        }
        // Physically truncated data and scrambled future rows give the same model.
        let cut: Vec<usize> = (0..f.val.start).collect();
        let short = fm.select_rows(&cut);
        let mut scrambled = fm.clone();
        for i in f.val.start..fm.x.rows() {
            scrambled.x.row_mut(i).iter_mut().for_each(|v| *v = 1e6 - *v);
            scrambled.labels[i] ^= 1;
        }
        let a = refit_outer_fold(&fm, &cfg, k).unwrap();
        let b = refit_outer_fold(&scrambled, &cfg, k).unwrap();
        assert_eq!(a.classifiers, b.classifiers);
        assert_eq!(a.ranking, b.ranking);
        let direct = fit_fold(&short.x, &short.labels, &cv.candidates, &cfg, outer_fold_seed(cfg.seed, k)).unwrap();
        assert_eq!(direct.classifiers, a.classifiers);
        let xv = fm.x.select_rows(&f.val.clone().collect::<Vec<_>>());
        for (c, h) in cv.candidates.iter().enumerate() {
            assert_eq!(cv.folds[k].scores[c], a.decision(h, c, &xv));
        }
    }
}

#[test]
fn fixed_seed_serialization_is_identical() {
    let fm = planted(6, 500, 8, 1);
    let (a, _) = run_nested_cv(&fm, &small_config(9)).unwrap();
    let (b, _) = run_nested_cv(&fm, &small_config(9)).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    assert_eq!(TrainedPipeline::from_text(&a.to_text()).unwrap(), a);
}

#[test]
fn drift_on_identical_halves() {
    let fm = planted(7, 500, 8, 1);
    let (p, _) = run_nested_cv(&fm, &small_config(1)).unwrap();
    let block = planted(8, 100, 8, 1);
    let twice = FeatureMatrix {
        dates: common::calendar(200),
        names: block.names.clone(),
        x: block.x.vstack(&block.x).unwrap(),
        labels: [block.labels.clone(), block.labels.clone()].concat(),
    };
    let r = drift_between(&p, &block, &twice).unwrap();
    assert!(r.ks.iter().all(|&k| k == 0.0));
    assert!((r.shap_spearman - 1.0).abs() < 1e-12);

    let mut shifted = block.clone();
    let j = block.column_index(&p.features[0]).unwrap();
    for i in 0..shifted.x.rows() {
        shifted.x.row_mut(i)[j] += 100.0;
    }
    let r = drift_between(&p, &block, &shifted).unwrap();
    assert_eq!(r.ks[0], 1.0);
}

#[test]
fn rolling_brier_sliding_sum() {
    let w = ROLLING_BRIER_WINDOW;
    let n = 200;
    let probs = vec![0.0; n];
    let mut labels = vec![0u8; n];
    labels[80] = 1;
    let rb = rolling_brier(&probs, &labels, w);
    for (t, v) in rb.iter().enumerate() {
        if t + 1 < w {
            assert!(v.is_nan());
        } else if (80..80 + w).contains(&t) {
            assert!((v - 1.0 / w as f64).abs() < 1e-15);
        } else {
            assert_eq!(*v, 0.0);
        }
    }
}

proptest! {
    #[test]
    fn rolling_brier_weighted_identity(
        pts in prop::collection::vec((0.0f64..1.0, 0u8..2), 70..200),
    ) {
        let w = ROLLING_BRIER_WINDOW;
        let p: Vec<f64> = pts.iter().map(|v| v.0).collect();
        let y: Vec<u8> = pts.iter().map(|v| v.1).collect();
        let n = p.len();
        let rb = rolling_brier(&p, &y, w);
        let windows: Vec<f64> = rb.into_iter().filter(|v| v.is_finite()).collect();
        let lhs = windows.iter().sum::<f64>() / windows.len() as f64;
        // Observation i appears in as many windows as cover it.
        let mut rhs = 0.0;
        for i in 0..n {
            let cover = (i + w - 1).min(n - 1) + 1 - i.max(w - 1);
            rhs += cover as f64 * (p[i] - f64::from(y[i])).powi(2);
        }
        rhs /= (w * windows.len()) as f64;
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn auc_antisymmetric(pts in prop::collection::vec((-3i32..3, 0u8..2), 2..60)) {
        let s: Vec<f64> = pts.iter().map(|v| f64::from(v.0)).collect();
        let y: Vec<u8> = pts.iter().map(|v| v.1).collect();
        prop_assume!(y.contains(&0) && y.contains(&1));
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((roc_auc(&s, &y).unwrap() - (1.0 - roc_auc(&neg, &y).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn isotonic_never_worsens_in_sample_brier(pts in prop::collection::vec((-3.0f64..3.0, 0u8..2), 2..80)) {
        let s: Vec<f64> = pts.iter().map(|v| v.0).collect();
        let y: Vec<u8> = pts.iter().map(|v| v.1).collect();
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let cal = fit_isotonic(&s, &yf).unwrap();
        let base = vec![yf.iter().sum::<f64>() / yf.len() as f64; yf.len()];
        prop_assert!(brier(&cal.predict_all(&s), &y).unwrap() <= brier(&base, &y).unwrap() + 1e-12);
    }

    #[test]
    fn shap_local_accuracy(
        w in prop::collection::vec(-2.0f64..2.0, 3),
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..20),
        bg in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let x = Matrix::from_rows(&rows).unwrap();
        let phi = linear_shap(&w, &x, &bg);
        let base: f64 = w.iter().zip(&bg).map(|(a, b)| a * b).sum();
        for i in 0..x.rows() {
            let score: f64 = w.iter().zip(x.row(i)).map(|(a, b)| a * b).sum();
            prop_assert!((phi.row(i).iter().sum::<f64>() + base - score).abs() < 1e-9);
        }
        let at_bg = linear_shap(&w, &Matrix::from_rows(std::slice::from_ref(&bg)).unwrap(), &bg);
        prop_assert!(at_bg.row(0).iter().all(|v| *v == 0.0));
        let w2: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
        let phi2 = linear_shap(&w2, &x, &bg);
        for i in 0..x.rows() {
            for j in 0..3 {
                prop_assert!((phi2.get(i, j).abs() - 2.0 * phi.get(i, j).abs()).abs() < 1e-12);
            }
        }
    }
}
