mod common;

use proptest::prelude::*;

use common::{bb_violations, brute_extrema, calendar, random_walk};
use troughcast::dataio::{generate_synthetic_market, SynthConfig};
use troughcast::turnlab::*;

fn kinds(t: &[TurningPoint]) -> Vec<(usize, TurnKind)> {
    t.iter().map(|p| (p.index, p.kind)).collect()
}

#[test]
fn extrema_match_bruteforce_scan() {
    for seed in 0..50 {
        let lp = random_walk(seed, 200, 0.1);
        let fast = find_local_extrema_log(&calendar(200), &lp, 5).unwrap();
        assert_eq!(kinds(&fast), brute_extrema(&lp, 5), "seed {seed}");
    }
}

#[test]
fn structural_properties_on_random_walks() {
    let p = BBParams::default();
    for seed in 0..100 {
        let lp = random_walk(seed, 1500, 0.03);
        let t = identify_turns_log(&calendar(lp.len()), &lp, &p).unwrap();
        let v = bb_violations(&t, &lp, &p);
        assert_eq!((v.alternation, v.min_phase, v.min_cycle), (0, 0, 0), "seed {seed}");
    }
}

#[test]
fn planted_troughs_are_recovered() {
    let b = generate_synthetic_market(&SynthConfig::new(7, 3200)).unwrap();
    let t = identify_turns(&b.prices, &BBParams::default()).unwrap();
    let troughs: Vec<usize> = t.iter().filter(|x| x.kind == TurnKind::Trough).map(|x| x.index).collect();
    for &k in &b.planted_troughs {
        assert!(troughs.iter().any(|&j| j.abs_diff(k) <= 3), "planted {k} not in {troughs:?}");
    }
}

#[test]
fn overlapping_windows_merge() {
    let dates = calendar(30);
    let mk = |i: usize| TurningPoint {
        index: i,
        date: dates[i],
        log_price: 0.0,
        kind: TurnKind::Trough,
    };
    let l = make_labels(&[mk(10), mk(14)], &dates, 5).unwrap();
    let expected: Vec<u8> = (0..30).map(|i| u8::from((5..=14).contains(&i))).collect();
    assert_eq!(l.labels, expected);
    assert_eq!(l.positives(), 10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn translation_invariant(seed in 0u64..10_000, shift in 0.1f64..5.0) {
        let p = BBParams { order: 5, min_phase: 8, min_cycle: 20 };
        let lp = random_walk(seed, 400, 0.05);
        let up: Vec<f64> = lp.iter().map(|v| v + shift).collect();
        let d = calendar(lp.len());
        let a = identify_turns_log(&d, &lp, &p).unwrap();
        let b = identify_turns_log(&d, &up, &p).unwrap();
        prop_assert_eq!(kinds(&a), kinds(&b));
    }

    #[test]
    fn censor_phases_is_idempotent(seed in 0u64..10_000) {
        let lp = random_walk(seed, 400, 0.05);
        let c = find_local_extrema_log(&calendar(lp.len()), &lp, 3).unwrap();
        let once = censor_phases(&c, 10);
        prop_assert_eq!(censor_phases(&once, 10), once);
    }

    #[test]
    fn alternation_output_alternates(seed in 0u64..10_000) {
        let lp = random_walk(seed, 300, 0.05);
        let c = find_local_extrema_log(&calendar(lp.len()), &lp, 2).unwrap();
        let a = enforce_alternation(&c);
        prop_assert!(a.windows(2).all(|w| w[0].kind != w[1].kind));
    }

    #[test]
    fn labels_lie_in_trough_windows(seed in 0u64..10_000, window in 0usize..10) {
        let lp = random_walk(seed, 600, 0.05);
        let d = calendar(lp.len());
        let p = BBParams { order: 5, min_phase: 10, min_cycle: 30 };
        let t = identify_turns_log(&d, &lp, &p).unwrap();
        let l = make_labels(&t, &d, window).unwrap();
        let troughs: Vec<usize> = t.iter().filter(|x| x.kind == TurnKind::Trough).map(|x| x.index).collect();
        for (i, &y) in l.labels.iter().enumerate() {
            let inside = troughs.iter().any(|&k| i <= k && k - i <= window);
            prop_assert_eq!(y == 1, inside);
        }
    }

    #[test]
    fn candidates_ignore_data_beyond_order(seed in 0u64..10_000, cut in 100usize..350) {
        let lp = random_walk(seed, 400, 0.05);
        let d = calendar(lp.len());
        let full = find_local_extrema_log(&d, &lp, 5).unwrap();
        let part = find_local_extrema_log(&d[..cut], &lp[..cut], 5).unwrap();
        let early = |t: &[TurningPoint]| t.iter().filter(|x| x.index + 5 < cut).map(|x| (x.index, x.kind)).collect::<Vec<_>>();
        prop_assert_eq!(early(&full), early(&part));
    }
}
