//! Property tests for the structural invariants: stationarity residuals,
//! filter normalization, chain-rule consistency, block partitions, and
//! derivative/finite-difference agreement on randomly drawn models.

use proptest::prelude::*;

use hmm_limits::deriv::logp_derivs;
use hmm_limits::family::{FamilyKind, ParamFamily};
use hmm_limits::hmm::{forward_step, EmissionChannel, ForwardFilter, HmmSpec};
use hmm_limits::markov::{stationary, stationary_power_iteration, StochasticMatrix};
use hmm_limits::stats::make_blocks;

/// Strictly positive row-stochastic matrices of a given size.
fn kernel_strategy(n: usize) -> impl Strategy<Value = StochasticMatrix> {
    prop::collection::vec(prop::collection::vec(0.05f64..1.0, n), n).prop_map(|rows| {
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|row| {
                let s: f64 = row.iter().sum();
                row.into_iter().map(|v| v / s).collect()
            })
            .collect();
        StochasticMatrix::new(&rows).expect("normalized positive rows")
    })
}

fn channel_strategy(n_states: usize, n_symbols: usize) -> impl Strategy<Value = EmissionChannel> {
    prop::collection::vec(prop::collection::vec(0.05f64..1.0, n_symbols), n_states).prop_map(|rows| {
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|row| {
                let s: f64 = row.iter().sum();
                row.into_iter().map(|v| v / s).collect()
            })
            .collect();
        EmissionChannel::new(&rows).expect("normalized positive rows")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stationary_vector_is_stationary(m in prop_oneof![kernel_strategy(2), kernel_strategy(3), kernel_strategy(5)]) {
        let pi = stationary(&m).unwrap();
        prop_assert!(pi.stationarity_residual(&m) <= 1e-10);
        let power = stationary_power_iteration(&m, 100_000);
        for (a, b) in pi.probs().iter().zip(power.probs()) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn filter_stays_normalized_and_chain_rule_holds(
        m in kernel_strategy(3),
        ch in channel_strategy(3, 2),
        seq in prop::collection::vec(0usize..2, 1..40),
    ) {
        let h = HmmSpec::build(m, ch).unwrap();
        let mut f = ForwardFilter::start(&h);
        let mut acc = 0.0;
        for &z in &seq {
            let (next, cond) = forward_step(&f, &h, z).unwrap();
            prop_assert!((next.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(cond > 0.0 && cond < 1.0);
            acc += cond.ln();
            f = next;
        }
        let direct = hmm_limits::hmm::log_sequence_prob(&h, &seq).unwrap();
        prop_assert!((acc - direct).abs() <= 1e-10);
    }

    #[test]
    fn block_partitions_cover_a_prefix(
        n in 50usize..200_000,
        alpha in 0.25f64..0.95,
        gap in 0.05f64..0.5,
    ) {
        let beta = (alpha - gap).max(0.01);
        prop_assume!(beta < alpha);
        let Ok(p) = make_blocks(n, alpha, beta) else { return Ok(()) };
        let mut cursor = 0usize;
        for i in 0..p.k {
            let s = p.short_range(i);
            let l = p.long_range(i);
            prop_assert_eq!(s.start, cursor);
            prop_assert_eq!(s.end, l.start);
            prop_assert_eq!(s.len(), p.short_len);
            prop_assert_eq!(l.len(), p.long_len);
            cursor = l.end;
        }
        prop_assert!(cursor <= n);
        prop_assert!(n - cursor < p.pair_len());
        // determinism
        prop_assert_eq!(p, make_blocks(n, alpha, beta).unwrap());
    }

    #[test]
    fn flip_family_score_matches_finite_difference(
        theta in 0.1f64..0.4,
        seq in prop::collection::vec(0usize..2, 20..60),
    ) {
        let fam = ParamFamily::new(FamilyKind::SymmetricFlip, 0.3, (0.05, 0.45)).unwrap();
        let ch = EmissionChannel::binary_symmetric(0.1);
        let out = logp_derivs(&fam, &ch, theta, &seq, 1, false).unwrap();
        let h = 1e-6;
        let up = logp_derivs(&fam, &ch, theta + h, &seq, 0, false).unwrap().value;
        let down = logp_derivs(&fam, &ch, theta - h, &seq, 0, false).unwrap().value;
        let fd = (up - down) / (2.0 * h);
        prop_assert!((out.d1 - fd).abs() <= 1e-4 * (1.0 + fd.abs()), "{} vs {}", out.d1, fd);
    }
}
