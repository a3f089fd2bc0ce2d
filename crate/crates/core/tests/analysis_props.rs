//! Ranking statistics against exhaustive references.

mod common;

use padnas_core::analysis::{kendall_tau, sign_test_p, spread_sample};
use padnas_core::oracle::{Evaluation, Source};
use padnas_core::space::Architecture;
use padnas_core::Error;
use proptest::prelude::*;

fn binomial_tail(wins: usize, n: usize) -> f64 {
    // P(X >= wins) for X ~ Bin(n, 1/2), summed term by term.
    let mut term = 0.5f64.powi(n as i32);
    let mut tail = 0.0;
    for k in 0..=n {
        if k >= wins {
            tail += term;
        }
        term *= (n - k) as f64 / (k + 1) as f64;
    }
    tail
}

proptest! {
    #[test]
    fn tau_matches_pair_counting(pairs in prop::collection::vec((0i32..8, 0i32..8), 2..80)) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        match (kendall_tau(&x, &y), common::brute_tau_b(&x, &y)) {
            (Ok(t), Some(b)) => {
                prop_assert!((t - b).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&t));
            }
            (Err(Error::TauUndefined(_)), None) => {}
            (fast, brute) => prop_assert!(false, "{:?} vs {:?}", fast, brute),
        }
    }

    #[test]
    fn tau_is_symmetric_and_flips_under_negation(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..60)) {
        let x: Vec<f64> = v.iter().map(|p| p.0).collect();
        let y: Vec<f64> = v.iter().map(|p| p.1).collect();
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        if let (Ok(a), Ok(b), Ok(c)) = (kendall_tau(&x, &y), kendall_tau(&y, &x), kendall_tau(&x, &neg)) {
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((a + c).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_test_is_the_binomial_tail(n in 1usize..60, w in 0usize..60) {
        let w = w % (n + 1);
        prop_assert!((sign_test_p(w, n) - binomial_tail(w, n)).abs() < 1e-12);
    }

    #[test]
    fn spread_sample_keeps_endpoints(len in 1usize..80, n in 1usize..40) {
        let front: Vec<Evaluation> = (0..len)
            .map(|i| Evaluation {
                architecture: Architecture::new([format!("a{i}")]),
                accuracy: i as f64 / 100.0,
                latency_ms: i as f64,
                source: Source::SyntheticTruth,
            })
            .rev()
            .collect();
        let (sample, short) = spread_sample(&front, n);
        prop_assert_eq!(short, len < n);
        prop_assert_eq!(sample.len(), len.min(n));
        prop_assert_eq!(&sample[0], front.last().unwrap());
        if n > 1 {
            prop_assert_eq!(sample.last().unwrap(), &front[0]);
        }
    }
}
