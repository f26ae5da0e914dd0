#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use troughcast::learners::isotonic::pava;
use troughcast::learners::lasso::fit_lasso;
use troughcast::learners::svm::primal_objective;
use troughcast::learners::tree::Node;
use troughcast::learners::*;

fn gauss(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn svm_instance() -> (Matrix, Vec<u8>) {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..14 {
        let label = u8::from(i % 2 == 0);
        let shift = if label == 1 { 0.6 } else { -0.6 };
        rows.push(vec![shift + gauss(&mut r), 0.5 * shift + gauss(&mut r)]);
        y.push(label);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

/// Subgradient descent on the primal with a decaying step; best iterate kept.
fn subgradient_min(x: &Matrix, y: &[u8], c: f64, iters: usize) -> f64 {
    let d = x.cols();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut best = primal_objective(x, y, &w, b, c);
    for t in 0..iters {
        let mut gw = w.clone();
        let mut gb = 0.0;
        for i in 0..x.rows() {
            let s = if y[i] == 1 { 1.0 } else { -1.0 };
            let row = x.row(i);
            let m = s * (row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b);
            if m < 1.0 {
                for j in 0..d {
                    gw[j] -= c * s * row[j];
                }
                gb -= c * s;
            }
        }
        let step = 0.05 / ((t + 1) as f64).sqrt();
        for j in 0..d {
            w[j] -= step * gw[j];
        }
        b -= step * gb;
        best = best.min(primal_objective(x, y, &w, b, c));
    }
    best
}

#[test]
fn svm_matches_subgradient_oracle() {
    let (x, y) = svm_instance();
    for c in [0.1, 1.0] {
        let m = fit_linear_svm(&x, &y, c).unwrap();
        let oracle = subgradient_min(&x, &y, c, 400_000);
        let rel = (m.objective - oracle).abs() / oracle;
        assert!(rel < 1e-4, "C={c}: solver {} vs oracle {oracle}", m.objective);
    }
}

#[test]
fn svm_reported_objective_is_the_definition() {
    let (x, y) = svm_instance();
    let m = fit_linear_svm(&x, &y, 0.5).unwrap();
    assert!(m.w.iter().all(|v| v.is_finite()));
    assert!((m.objective - primal_objective(&x, &y, &m.w, m.b, 0.5)).abs() < 1e-10);
}

/// Exact isotonic regression by enumerating contiguous block partitions.
fn isotonic_bruteforce(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut fit = Vec::with_capacity(n);
        let mut start = 0;
        for i in 0..n {
            let cut = i == n - 1 || mask & (1 << i) != 0;
            if cut {
                let m = y[start..=i].iter().sum::<f64>() / (i + 1 - start) as f64;
                fit.extend(std::iter::repeat_n(m, i + 1 - start));
                start = i + 1;
            }
        }
        if fit.windows(2).any(|w| w[0] > w[1] + 1e-12) {
            continue;
        }
        let sse: f64 = fit.iter().zip(y).map(|(f, v)| (f - v).powi(2)).sum();
        if best.as_ref().is_none_or(|b| sse < b.0 - 1e-12) {
            best = Some((sse, fit));
        }
    }
    best.unwrap().1
}

#[test]
fn pava_small_qp() {
    assert_eq!(pava(&[3.0, 1.0, 2.0], &[1.0; 3]), vec![2.0, 2.0, 2.0]);
    assert_eq!(isotonic_bruteforce(&[3.0, 1.0, 2.0]), vec![2.0, 2.0, 2.0]);
}

proptest! {
    #[test]
    fn pava_equals_bruteforce(y in prop::collection::vec(-5.0f64..5.0, 2..9)) {
        let fast = pava(&y, &vec![1.0; y.len()]);
        let slow = isotonic_bruteforce(&y);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() < 1e-9, "{fast:?} vs {slow:?}");
        }
    }

    #[test]
    fn isotonic_is_idempotent(y in prop::collection::vec(-5.0f64..5.0, 2..40)) {
        let once = pava(&y, &vec![1.0; y.len()]);
        let twice = pava(&once, &vec![1.0; y.len()]);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn calibrator_is_monotone_and_bounded(
        pts in prop::collection::vec((-3.0f64..3.0, 0u8..2), 2..60),
        probes in prop::collection::vec(-4.0f64..4.0, 1..30),
    ) {
        let s: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let o: Vec<f64> = pts.iter().map(|p| f64::from(p.1)).collect();
        let cal = fit_isotonic(&s, &o).unwrap();
        let mut probes = probes;
        probes.sort_by(f64::total_cmp);
        let out = cal.predict_all(&probes);
        prop_assert!(out.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!(out.windows(2).all(|w| w[0] <= w[1] + 1e-15));
    }

    #[test]
    fn scaler_standardizes_training_columns(
        rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 3..50)
    ) {
        let x = Matrix::from_rows(&rows).unwrap();
        let s = Scaler::fit(&x);
        let z = s.transform(&x);
        for j in 0..x.cols() {
            let raw = x.column(j);
            let spread = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - raw.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-3);
            let c = z.column(j);
            let n = c.len() as f64;
            let m = c.iter().sum::<f64>() / n;
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((sd - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn lasso_satisfies_kkt(seed in 0u64..500, lambda in 0.01f64..0.5) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = 60;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| gauss(&mut r)).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|v| v[0] - 0.5 * v[2] + 0.3 * gauss(&mut r)).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = fit_lasso(&x, &y, lambda).unwrap();
        let pred = m.predict_matrix(&x);
        let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        prop_assert!(resid.iter().sum::<f64>().abs() < 1e-8);
        for j in 0..4 {
            let col = x.column(j);
            let mu = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64).sqrt();
            // Gradient of the loss in the standardized coordinate.
            let g = col.iter().zip(&resid).map(|(v, e)| (v - mu) / sd * e).sum::<f64>() / n as f64;
            let b = m.coef[j] * sd;
            if b == 0.0 {
                prop_assert!(g.abs() <= lambda + 1e-3);
            } else {
                prop_assert!((g - lambda * b.signum()).abs() < 1e-3, "j={j} g={g} b={b}");
            }
        }
    }
}

#[test]
fn forest_finds_planted_feature() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let n = 300;
    let y: Vec<u8> = (0..n).map(|_| u8::from(r.random::<f64>() < 0.3)).collect();
    let rows: Vec<Vec<f64>> = y
        .iter()
        .map(|&l| (0..6).map(|j| if j == 4 { f64::from(l) } else { r.random::<f64>() }).collect())
        .collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let params = ForestParams {
        n_trees: 60,
        ..ForestParams::default()
    };
    for seed in [1, 2] {
        let f = fit_forest(&x, &y, &params, seed).unwrap();
        let imp = f.gini_importance();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(f.ranking()[0], 4, "{imp:?}");
    }
}

#[test]
fn forest_and_gbm_replay_under_seed() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..120).map(|_| (0..3).map(|_| gauss(&mut r)).collect()).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let yc: Vec<u8> = rows.iter().map(|v| u8::from(v[0] + 0.5 * v[1] > 0.0)).collect();
    let yr: Vec<f64> = rows.iter().map(|v| v[0].sin() + v[2]).collect();
    let p = ForestParams {
        n_trees: 20,
        ..ForestParams::default()
    };
    let (a, b) = (fit_forest(&x, &yc, &p, 9).unwrap(), fit_forest(&x, &yc, &p, 9).unwrap());
    assert_eq!(a.trees, b.trees);
    assert_eq!(a.gini_importance(), b.gini_importance());
    let g = GbmParams::default();
    let (a, b) = (fit_gbm(&x, &yr, &g, 9).unwrap(), fit_gbm(&x, &yr, &g, 9).unwrap());
    assert_eq!(a.predict_matrix(&x), b.predict_matrix(&x));
}

#[test]
fn gbm_one_stump_is_the_best_split() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let n = 40;
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![r.random::<f64>(), i as f64 / n as f64]).collect();
    let y: Vec<f64> = rows.iter().map(|v| if v[1] > 0.62 { 3.0 } else { -1.0 } + 0.1 * gauss(&mut r)).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let params = GbmParams {
        rounds: 1,
        max_depth: 1,
        learning_rate: 1.0,
    };
    let m = fit_gbm(&x, &y, &params, 1).unwrap();
    // Exhaustive oracle over every feature and midpoint threshold.
    let mut best = (f64::INFINITY, 0usize, 0.0f64);
    for j in 0..2 {
        let mut v = x.column(j);
        v.sort_by(f64::total_cmp);
        for w in v.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let (l, rr): (Vec<f64>, Vec<f64>) = (0..n).fold((vec![], vec![]), |(mut l, mut rr), i| {
                if x.get(i, j) <= t { l.push(y[i]) } else { rr.push(y[i]) }
                (l, rr)
            });
            let sse = |s: &[f64]| {
                let m = s.iter().sum::<f64>() / s.len() as f64;
                s.iter().map(|v| (v - m).powi(2)).sum::<f64>()
            };
            let total = sse(&l) + sse(&rr);
            if total < best.0 {
                best = (total, j, t);
            }
        }
    }
    assert_eq!(m.trees.len(), 1);
    match m.trees[0].nodes[0] {
        Node::Split { feature, threshold, .. } => {
            assert_eq!(feature, best.1);
            assert!((threshold - best.2).abs() < 1e-12);
        }
        Node::Leaf(_) => panic!("no split"),
    }
    let fit = m.predict_matrix(&x);
    let sse: f64 = fit.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
    assert!((sse - best.0).abs() < 1e-9);
}

#[test]
fn gnb_separates_gaussians() {
    let mut r = ChaCha8Rng::seed_from_u64(21);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..400 {
        let l = u8::from(i % 2 == 1);
        let mu = if l == 1 { 2.5 } else { -2.5 };
        rows.push(vec![mu + gauss(&mut r), -mu + gauss(&mut r)]);
        y.push(l);
    }
    let x = Matrix::from_rows(&rows).unwrap();
    let m = fit_gnb(&x, &y).unwrap();
    let hits = (0..x.rows())
        .filter(|&i| u8::from(m.predict_proba(x.row(i)) > 0.5) == y[i])
        .count();
    assert!(hits as f64 / x.rows() as f64 > 0.95);
}

#[test]
fn smote_contracts() {
    let two = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 4.0]]).unwrap();
    let s = smote(&two, 12, 1.0, 1, 4).unwrap();
    assert_eq!(s.rows(), 10);
    for i in 0..s.rows() {
        let p = s.row(i);
        assert!((p[1] - 2.0 * p[0]).abs() < 1e-12 && (0.0..=2.0).contains(&p[0]));
    }
    assert_eq!(smote(&two, 12, 0.0, 1, 4).unwrap().rows(), 0);
    assert_eq!(s, smote(&two, 12, 1.0, 1, 4).unwrap());
    assert!(smote(&two, 12, 1.0, 5, 4).is_err());
}

#[test]
fn heuristic_vix_is_strict() {
    assert_eq!(heuristic_vix(&[82.69, 17.8, 40.0, 40.01], 40.0), vec![1.0, 0.0, 0.0, 1.0]);
}
