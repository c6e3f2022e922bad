//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers. Run with `cargo test --test acceptance -- --nocapture`.

use hmm_limits::deriv::{logp_derivs, model_at_theta0};
use hmm_limits::exec::{stream_rng, StreamKind};
use hmm_limits::family::{AffineFamilySpec, FamilyKind, ParamFamily};
use hmm_limits::hmm::{for_each_sequence, simulate_hmm, EmissionChannel, HmmSpec};
use hmm_limits::lab::{
    psi_mixing_profile, run_chernoff, run_clt, run_lil, variance_dichotomy, DichotomyVerdict,
    ExperimentConfig, FamilySpec, IncrementSource,
};
use hmm_limits::markov::stationary;
use hmm_limits::mle::{run_rate_experiment, score_identity_check};
use hmm_limits::models;
use hmm_limits::stats::{
    autocov, exact_partial_sum_variance, variance_curve, CenteringMode, ModelCtx,
};

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Sequence probability by direct matrix products in plain arithmetic; an
/// independent route from the log-space filter.
fn direct_sequence_prob(h: &HmmSpec, seq: &[usize]) -> f64 {
    let n = h.n_states();
    let mut row: Vec<f64> = h.pi().probs().to_vec();
    let mut next = vec![0.0; n];
    for &z in seq {
        let m = h.symbol_matrix(z);
        for v in next.iter_mut() {
            *v = 0.0;
        }
        for i in 0..n {
            for j in 0..n {
                next[j] += row[i] * m[i * n + j];
            }
        }
        std::mem::swap(&mut row, &mut next);
    }
    row.iter().sum()
}

#[test]
fn crit01_exactness_suite() {
    // total law normalization, binary alphabet to n = 12
    let h = models::canonical_hmm();
    for n in [6, 12] {
        let mut terms = Vec::with_capacity(1 << n);
        for_each_sequence(2, n, |seq| {
            terms.push(hmm_limits::hmm::exact_sequence_prob(&h, seq).unwrap());
        });
        let total = kahan_sum(terms.into_iter());
        assert!((total - 1.0).abs() <= 1e-12, "n={n}: sum {total}");
    }
    // three-symbol model to n = 7
    let h3 = HmmSpec::build(
        models::logistic_family().kernel_at(0.2).unwrap(),
        models::three_symbol_channel(),
    )
    .unwrap();
    let mut terms = Vec::new();
    for_each_sequence(3, 7, |seq| {
        terms.push(hmm_limits::hmm::exact_sequence_prob(&h3, seq).unwrap());
    });
    let total = kahan_sum(terms.into_iter());
    assert!((total - 1.0).abs() <= 1e-12, "3-symbol sum {total}");

    // chain rule: log-space filter versus direct matrix products
    let mut rng = stream_rng(1, StreamKind::Replica, 0);
    let mut worst_chain: f64 = 0.0;
    for _ in 0..50 {
        let (_, seq) = simulate_hmm(&h, 12, &mut rng);
        let lp = hmm_limits::hmm::log_sequence_prob(&h, &seq).unwrap();
        let direct = direct_sequence_prob(&h, &seq).ln();
        worst_chain = worst_chain.max((lp - direct).abs());
    }
    assert!(worst_chain <= 1e-10, "chain-rule gap {worst_chain}");

    // shift invariance: marginalizing a prepended symbol reproduces the law
    let mut worst_shift: f64 = 0.0;
    for n in 1..=8 {
        for_each_sequence(2, n, |seq| {
            let p = hmm_limits::hmm::exact_sequence_prob(&h, seq).unwrap();
            let mut ext = 0.0;
            for z0 in 0..2 {
                let mut longer = vec![z0];
                longer.extend_from_slice(seq);
                ext += hmm_limits::hmm::exact_sequence_prob(&h, &longer).unwrap();
            }
            worst_shift = worst_shift.max((ext - p).abs());
        });
    }
    assert!(worst_shift <= 1e-12, "shift gap {worst_shift}");

    // score identity at the true parameter, two families
    let r_flip = score_identity_check(&models::flip_family(), &models::canonical_channel(), 6).unwrap();
    assert!(r_flip <= 1e-10, "flip score residual {r_flip}");
    let affine = ParamFamily::new(
        FamilyKind::Affine {
            a: vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            b: vec![vec![-0.5, 0.5], vec![0.25, -0.25]],
        },
        0.1,
        (-0.2, 0.3),
    )
    .unwrap();
    let r_aff = score_identity_check(&affine, &models::canonical_channel(), 4).unwrap();
    assert!(r_aff <= 1e-10, "affine score residual {r_aff}");

    println!(
        "ACCEPTANCE 01 exactness: PASS (chain {worst_chain:.2e}, shift {worst_shift:.2e}, scores {r_flip:.2e}/{r_aff:.2e})"
    );
}

#[test]
fn crit02_derivative_correctness() {
    let cases = [
        (models::flip_family(), models::canonical_channel(), 0.3),
        (models::canonical_family(), models::canonical_channel(), 0.15),
        (models::logistic_family(), models::three_symbol_channel(), 0.25),
    ];
    let mut worst_d1: f64 = 0.0;
    let mut worst_d2: f64 = 0.0;
    for (model_idx, (fam, ch, theta)) in cases.iter().enumerate() {
        let data = model_at_theta0(fam, ch).unwrap();
        for (k, n) in [(0u64, 10usize), (1, 100), (2, 1000)] {
            let mut rng = stream_rng(42 + model_idx as u64, StreamKind::Replica, k);
            let (_, seq) = simulate_hmm(&data, n, &mut rng);
            let out = logp_derivs(fam, ch, *theta, &seq, 2, false).unwrap();
            let value_at = |t: f64| logp_derivs(fam, ch, t, &seq, 0, false).unwrap().value;

            let h1 = 1e-5;
            let fd1 = (value_at(theta + h1) - value_at(theta - h1)) / (2.0 * h1);
            let rel1 = (out.d1 - fd1).abs() / fd1.abs().max(1e-12);
            worst_d1 = worst_d1.max(rel1);
            assert!(rel1 <= 1e-6, "model {model_idx}, n={n}: d1 {} vs fd {fd1}", out.d1);

            // Richardson-extrapolated second central difference
            let h2 = 2e-3;
            let d2_h = |h: f64| (value_at(theta + h) - 2.0 * value_at(*theta) + value_at(theta - h)) / (h * h);
            let fd2 = (4.0 * d2_h(h2 / 2.0) - d2_h(h2)) / 3.0;
            let rel2 = (out.d2 - fd2).abs() / fd2.abs().max(1e-12);
            worst_d2 = worst_d2.max(rel2);
            assert!(rel2 <= 1e-4, "model {model_idx}, n={n}: d2 {} vs fd {fd2}", out.d2);
        }
    }
    println!("ACCEPTANCE 02 derivatives: PASS (worst d1 rel {worst_d1:.2e}, worst d2 rel {worst_d2:.2e})");
}

#[test]
fn crit03_entropy_rate_oracle() {
    let kernel = models::canonical_kernel();
    let pi = stationary(&kernel).unwrap();
    let closed_form = kernel.entropy_rate(&pi);

    let fam = ParamFamily::new(
        FamilyKind::Tilted { c: 0.2 },
        0.1,
        (0.02, 0.6),
    )
    .unwrap();
    let channel = EmissionChannel::identity_smoothed(2, 1e-6);
    let est = hmm_limits::deriv::estimate_l(&fam, &channel, 0.1, 0, 100_000, 64, 303).unwrap();
    let entropy = -est.value;
    let gap = (entropy - closed_form).abs();
    assert!(
        gap <= 3.0 * est.stderr,
        "entropy {entropy} vs closed form {closed_form}, gap {gap} > 3se {}",
        3.0 * est.stderr
    );
    println!(
        "ACCEPTANCE 03 entropy oracle: PASS (estimate {entropy:.6}, closed form {closed_form:.6}, gap {gap:.2e} <= 3se {:.2e})",
        3.0 * est.stderr
    );
}

#[test]
fn crit04_variance_consistency() {
    let ctx = ModelCtx::new(models::canonical_family(), models::canonical_channel(), 0.1, 0).unwrap();
    let ac = autocov(&ctx, 50, 2000, 2000, 404).unwrap();
    let curve = variance_curve(&ctx, &[10_000], 2000, 405).unwrap();
    let ratio = curve.points[0].ratio;
    let rel = (ac.sigma2 - ratio).abs() / ratio.abs();
    assert!(rel <= 0.05, "sigma2 {} vs Var(S_n)/n {} ({:.1}%)", ac.sigma2, ratio, 100.0 * rel);

    // enumeration variance versus Monte Carlo at small n
    for n in [4usize, 6, 8] {
        let exact = exact_partial_sum_variance(&ctx, n).unwrap();
        let means = ctx.exact_stepwise_means(n);
        let sums: Vec<f64> = hmm_limits::exec::replica_map(10_000, |r| {
            let mut rng = stream_rng(406 + n as u64, StreamKind::Replica, r as u64);
            let symbols = ctx.simulate_symbols(n, &mut rng);
            ctx.raw_increments(&symbols)
                .iter()
                .zip(&means)
                .map(|(v, m)| v - m)
                .sum()
        });
        let mc = hmm_limits::numeric::sample_variance(&sums);
        let se = hmm_limits::numeric::stderr_of_variance(&sums);
        assert!(
            (mc - exact).abs() <= 3.0 * se,
            "n={n}: exact {exact} vs mc {mc} (3se {})",
            3.0 * se
        );
    }
    println!(
        "ACCEPTANCE 04 variance consistency: PASS (autocov {:.5} vs ratio {:.5}, gap {:.2}%)",
        ac.sigma2,
        ratio,
        100.0 * rel
    );
}

/// Canonical kernel observed through a rare informative symbol. The rare
/// symbol makes the partial sums Poisson-like at n = 256, so the distance
/// to the normal sits far above the 2000-sample noise floor and its decay
/// is measurable.
fn canonical_clt_config(order: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        FamilySpec::Tilted { c: 0.2, theta0: 0.1, omega: (0.02, 0.6) },
        vec![vec![0.995, 0.005], vec![0.95, 0.05]],
        vec![256, 1024, 4096],
        2000,
        505 + order as u64,
    );
    cfg.order = order;
    cfg
}

#[test]
fn crit05_clt_ks_decay() {
    // canonical model, orders 0 and 1: KS(4096) < KS(256) with 2000 samples
    for order in [0usize, 1] {
        let report = run_clt(&canonical_clt_config(order)).unwrap();
        let ks256 = report.per_n[0].ks;
        let ks4096 = report.per_n[2].ks;
        assert!(
            ks4096 < ks256,
            "order {order}: KS(4096) = {ks4096} not below KS(256) = {ks256}"
        );
        println!("ACCEPTANCE 05 clt (order {order}): KS(256) {ks256:.4} -> KS(4096) {ks4096:.4}");
    }

    // memoryless construction: fitted exponent within the classical band
    let kernel_row = [0.75f64, 0.25];
    let eps = 0.01f64;
    let marginal: Vec<f64> = (0..2)
        .map(|z| {
            (0..2)
                .map(|j| {
                    let p = if z == j { 1.0 - eps + eps / 2.0 } else { eps / 2.0 };
                    kernel_row[j] * p
                })
                .sum()
        })
        .collect();
    let (mu, var) = models::iid_logprob_moments(&marginal);
    let mut cfg = ExperimentConfig::new(
        FamilySpec::Affine(AffineFamilySpec {
            a: vec![vec![0.75, 0.25], vec![0.75, 0.25]],
            b: vec![vec![-1.0, 1.0], vec![-1.0, 1.0]],
            omega: (-0.1, 0.1),
            theta0: 0.0,
        }),
        vec![
            vec![1.0 - eps + eps / 2.0, eps / 2.0],
            vec![eps / 2.0, 1.0 - eps + eps / 2.0],
        ],
        vec![64, 256, 1024, 4096],
        50_000,
        506,
    );
    cfg.exact_moments = Some((mu, var));
    let report = run_clt(&cfg).unwrap();
    let e = report.exponent.estimate;
    assert!(
        (-0.7..=-0.3).contains(&e),
        "memoryless KS exponent {e} outside [-0.7, -0.3] (band [{}, {}])",
        report.exponent.lo,
        report.exponent.hi
    );
    println!("ACCEPTANCE 05 clt: PASS (memoryless exponent {e:.3})");
}

#[test]
fn crit06_mixing_decay() {
    let h = models::canonical_hmm();
    let grid: Vec<usize> = (1..=8).collect();
    let report = psi_mixing_profile(&h, &grid, 3).unwrap();
    assert!(report.strictly_decreasing, "psi not strictly decreasing: {:?}", report.psi);
    assert!(
        report.rate <= report.lambda2 + 0.05,
        "rate {} above lambda2 + 0.05 = {}",
        report.rate,
        report.lambda2 + 0.05
    );
    println!(
        "ACCEPTANCE 06 mixing: PASS (rate {:.4} <= lambda2 {:.4} + 0.05, strictly decreasing)",
        report.rate, report.lambda2
    );
}

#[test]
fn crit07_forgetting_decay() {
    let h = models::canonical_hmm();
    let g5 = hmm_limits::hmm::conditional_gap_at_window(&h, 5, 200, 707).unwrap();
    let g20 = hmm_limits::hmm::conditional_gap_at_window(&h, 20, 200, 707).unwrap();
    assert!(g20 <= g5 / 10.0, "conditional: gap20 {g20} vs gap5 {g5}");

    let fam = models::canonical_family();
    let ch = models::canonical_channel();
    for order in [1usize, 2] {
        let d5 = hmm_limits::deriv::deriv_gap_at_window(&fam, &ch, 0.1, order, 5, 200, 708).unwrap();
        let d20 = hmm_limits::deriv::deriv_gap_at_window(&fam, &ch, 0.1, order, 20, 200, 708).unwrap();
        assert!(d20 <= d5 / 10.0, "order {order}: gap20 {d20} vs gap5 {d5}");
    }
    println!("ACCEPTANCE 07 forgetting: PASS (conditional {g5:.2e} -> {g20:.2e}, >= 10x)");
}

#[test]
fn crit08_chernoff_monotonicity() {
    let mut cfg = ExperimentConfig::new(
        FamilySpec::Tilted { c: 0.2, theta0: 0.1, omega: (0.02, 0.6) },
        vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        vec![200, 632, 2000],
        2000,
        808,
    );
    cfg.order = 0;
    cfg.x_list = vec![0.05, 10.0];
    let report = run_chernoff(&cfg).unwrap();
    // tail at the moderate threshold decreases across the decade
    let moderate: Vec<f64> = report
        .points
        .iter()
        .filter(|p| p.x == 0.05)
        .map(|p| p.p_hat)
        .collect();
    assert!(
        moderate.last().unwrap() < moderate.first().unwrap(),
        "tails {moderate:?} did not shrink"
    );
    assert!(report.smallest_n_exceedances[0] >= 5, "too few exceedances at n=200");
    // a threshold beyond the increment bound is never exceeded
    assert!(report.no_exceedances[1], "x = 10 saw exceedances");
    println!(
        "ACCEPTANCE 08 chernoff: PASS (tail {:.4} -> {:.4} over one decade, zero tail beyond bound)",
        moderate.first().unwrap(),
        moderate.last().unwrap()
    );
}

#[test]
fn crit09_lil_envelope() {
    // near-uniform memoryless model with closed-form moments
    let kernel_row = [0.6f64, 0.4];
    let eps = 0.01f64;
    let marginal: Vec<f64> = (0..2)
        .map(|z| {
            (0..2)
                .map(|j| {
                    let p = if z == j { 1.0 - eps + eps / 2.0 } else { eps / 2.0 };
                    kernel_row[j] * p
                })
                .sum()
        })
        .collect();
    let (mu, var) = models::iid_logprob_moments(&marginal);
    let mut cfg = ExperimentConfig::new(
        FamilySpec::Affine(AffineFamilySpec {
            a: vec![vec![0.6, 0.4], vec![0.6, 0.4]],
            b: vec![vec![-1.0, 1.0], vec![-1.0, 1.0]],
            omega: (-0.1, 0.1),
            theta0: 0.0,
        }),
        vec![
            vec![1.0 - eps + eps / 2.0, eps / 2.0],
            vec![eps / 2.0, 1.0 - eps + eps / 2.0],
        ],
        vec![10_000_000],
        100,
        909,
    );
    cfg.trajectories = 32;
    cfg.exact_moments = Some((mu, var));
    let report = run_lil(&cfg).unwrap();
    assert!(report.within_envelope, "some trajectory left the sanity envelope");
    assert!(
        report.in_band >= 28,
        "only {}/32 trajectories inside [0.5, 1.5]",
        report.in_band
    );
    println!(
        "ACCEPTANCE 09 lil envelope: PASS ({}/32 in [0.5, 1.5], envelope held)",
        report.in_band
    );
}

#[test]
fn crit10_dichotomy_diagnostic() {
    let mut cfg = ExperimentConfig::new(
        FamilySpec::Tilted { c: 0.2, theta0: 0.1, omega: (0.02, 0.6) },
        vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        vec![16, 64, 256, 1024, 4096],
        400,
        1010,
    );
    cfg.order = 0;
    let cob = variance_dichotomy(&cfg, &IncrementSource::Coboundary { g: vec![0.0, 1.7] }).unwrap();
    assert_eq!(cob.verdict, DichotomyVerdict::Bounded, "coboundary: {cob:?}");
    let model = variance_dichotomy(&cfg, &IncrementSource::Model).unwrap();
    assert_eq!(model.verdict, DichotomyVerdict::LinearGrowth, "model: {model:?}");
    println!(
        "ACCEPTANCE 10 dichotomy: PASS (coboundary slope {:.3} -> bounded, model slope {:.3} -> linear)",
        cob.loglog_slope, model.loglog_slope
    );
}

#[test]
fn crit11_mle_rate() {
    let mut cfg = ExperimentConfig::new(
        FamilySpec::Flip { theta0: 0.3, omega: (0.05, 0.45) },
        vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        vec![1000, 10_000],
        400,
        1111,
    );
    cfg.order = 0;
    let report = run_rate_experiment(&cfg, &[0.05], (0.07, 0.43)).unwrap();
    let p_small = report.points[0].p_hat;
    let p_large = report.points[1].p_hat;
    assert!(p_large < p_small, "exceedance {p_small} -> {p_large} did not decrease");
    let slope = report.median_slope.estimate;
    assert!(
        (-0.65..=-0.35).contains(&slope),
        "median-error slope {slope} outside [-0.65, -0.35]"
    );
    println!(
        "ACCEPTANCE 11 mle rate: PASS (exceedance {p_small:.3} -> {p_large:.3}, median slope {slope:.3})"
    );
}

#[test]
fn crit04b_centering_modes_are_consistent() {
    // exact-enumeration centering agrees with the long-run mean at small n
    let ctx = ModelCtx::new(models::canonical_family(), models::canonical_channel(), 0.1, 0).unwrap();
    let series = hmm_limits::stats::build_increments(&ctx, 8, 42, CenteringMode::ExactEnumeration).unwrap();
    assert_eq!(series.x.len(), 8);
    let (mu_long, _) = ctx.long_run_mean(100_000, 42);
    let means = ctx.exact_stepwise_means(8);
    // stepwise means converge to the long-run mean geometrically
    assert!((means[7] - mu_long).abs() <= 5e-3, "mean {} vs long-run {}", means[7], mu_long);
    println!("ACCEPTANCE 04b centering: PASS");
}
