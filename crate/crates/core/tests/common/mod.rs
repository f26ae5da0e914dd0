#![allow(dead_code)]

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use troughcast::turnlab::{BBParams, TurnKind, TurningPoint};

pub fn calendar(n: usize) -> Vec<NaiveDate> {
    let d0 = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
    (0..n).map(|i| d0 + Duration::days(i as i64)).collect()
}

/// Uniform-increment random walk in log price.
pub fn random_walk(seed: u64, n: usize, step: f64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut lp = Vec::with_capacity(n);
    let mut x = 4.0;
    for _ in 0..n {
        lp.push(x);
        x += step * (r.random::<f64>() - 0.5);
    }
    lp
}

/// Exhaustive windowed scan: strict extremum over `±order`.
pub fn brute_extrema(lp: &[f64], order: usize) -> Vec<(usize, TurnKind)> {
    let n = lp.len();
    let mut out = Vec::new();
    for i in order..n - order {
        let others: Vec<f64> = (i - order..=i + order).filter(|&j| j != i).map(|j| lp[j]).collect();
        if others.iter().all(|&v| v < lp[i]) {
            out.push((i, TurnKind::Peak));
        } else if others.iter().all(|&v| v > lp[i]) {
            out.push((i, TurnKind::Trough));
        }
    }
    out
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct BBViolations {
    pub alternation: usize,
    pub min_phase: usize,
    pub min_cycle: usize,
    pub peak_not_max: usize,
}

pub fn bb_violations(t: &[TurningPoint], lp: &[f64], p: &BBParams) -> BBViolations {
    let mut v = BBViolations::default();
    for w in t.windows(2) {
        if w[0].kind == w[1].kind {
            v.alternation += 1;
        }
        if w[1].index - w[0].index < p.min_phase {
            v.min_phase += 1;
        }
    }
    for w in t.windows(3) {
        if w[2].index - w[0].index < p.min_cycle {
            v.min_cycle += 1;
        }
        if w[1].kind == TurnKind::Peak && lp[w[0].index..=w[2].index].iter().any(|&x| x > w[1].log_price) {
            v.peak_not_max += 1;
        }
    }
    v
}
