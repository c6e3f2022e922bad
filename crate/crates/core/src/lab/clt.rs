//! Normal-approximation experiment: Kolmogorov-Smirnov distance of the
//! normalized log-likelihood derivative to the standard normal, per sequence
//! length, with a fitted decay exponent.

use serde::{Deserialize, Serialize};

use super::{derive_seed, moments_for, ExperimentConfig, SIGMA_FLOOR};
use crate::deriv::normalized_loglik_values;
use crate::error::{Error, Result};
use crate::exec::{stream_rng, StreamKind};
use crate::numeric::{bootstrap_band, linear_fit, FitWithBand};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KsPoint {
    pub n: usize,
    pub ks: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KsReport {
    /// Long-run standard deviation used in the normalization.
    pub sigma: f64,
    pub sigma_stderr: f64,
    /// Per-symbol limit used for centering.
    pub l_value: f64,
    /// "exact" when closed-form moments were supplied, else "estimated".
    pub moment_source: String,
    pub per_n: Vec<KsPoint>,
    /// Log-log slope of the KS distance in n, with a bootstrap band.
    pub exponent: FitWithBand,
    /// Whether the band admits decay at rate -0.2 or faster.
    pub rate_consistent: bool,
}

/// KS distance computed from probability transforms already sorted.
fn ks_from_sorted_pit(u: &[f64]) -> f64 {
    let n = u.len() as f64;
    let mut d = 0.0f64;
    for (i, &ui) in u.iter().enumerate() {
        d = d.max((i as f64 + 1.0) / n - ui).max(ui - i as f64 / n);
    }
    d
}

/// Runs the KS-decay experiment described by `cfg`.
pub fn run_clt(cfg: &ExperimentConfig) -> Result<KsReport> {
    let ctx = cfg.ctx()?;
    let (l_value, sigma2, sigma2_stderr, moment_source) = moments_for(cfg, &ctx, None)?;
    let sigma = sigma2.max(0.0).sqrt();
    if sigma <= SIGMA_FLOOR {
        return Err(Error::DegenerateVariance { sigma, floor: SIGMA_FLOOR });
    }

    let mut per_n = Vec::with_capacity(cfg.n_grid.len());
    let mut pit_per_n: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_grid.len());
    for (gi, &n) in cfg.n_grid.iter().enumerate() {
        let values = normalized_loglik_values(
            ctx.family(),
            ctx.channel(),
            ctx.theta(),
            ctx.order(),
            n,
            cfg.reps,
            derive_seed(cfg.seed, 200 + gi as u64),
        )?;
        let scale = (n as f64).sqrt() * sigma;
        let mut pit: Vec<f64> = values
            .iter()
            .map(|v| crate::numeric::std_normal_cdf((v * n as f64 - n as f64 * l_value) / scale))
            .collect();
        pit.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite PIT"));
        per_n.push(KsPoint { n, ks: ks_from_sorted_pit(&pit), samples: cfg.reps });
        pit_per_n.push(pit);
    }

    let ln_n: Vec<f64> = cfg.n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let slope_of = |ks: &[f64]| -> f64 {
        let ln_ks: Vec<f64> = ks.iter().map(|k| k.max(1e-300).ln()).collect();
        linear_fit(&ln_n, &ln_ks).1
    };
    let estimate = slope_of(&per_n.iter().map(|p| p.ks).collect::<Vec<_>>());
    let mut rng = stream_rng(derive_seed(cfg.seed, 4), StreamKind::Bootstrap, 0);
    let mut scratch: Vec<f64> = Vec::new();
    let exponent = bootstrap_band(estimate, 1000, &mut rng, |rng| {
        let ks: Vec<f64> = pit_per_n
            .iter()
            .map(|pit| {
                crate::numeric::resample_into(pit, &mut scratch, rng);
                scratch.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite PIT"));
                ks_from_sorted_pit(&scratch)
            })
            .collect();
        slope_of(&ks)
    });

    Ok(KsReport {
        sigma,
        sigma_stderr: sigma2_stderr / (2.0 * sigma),
        l_value,
        moment_source,
        per_n,
        rate_consistent: exponent.lo <= -0.2,
        exponent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::FamilySpec;

    #[test]
    fn degenerate_family_is_detected() {
        // uniform channel makes the likelihood independent of theta, so the
        // order-1 increments vanish identically
        let mut cfg = ExperimentConfig::new(
            FamilySpec::Flip { theta0: 0.3, omega: (0.05, 0.45) },
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![128, 256],
            200,
            5,
        );
        cfg.order = 1;
        match run_clt(&cfg) {
            Err(Error::DegenerateVariance { sigma, .. }) => assert!(sigma <= SIGMA_FLOOR),
            other => panic!("expected DegenerateVariance, got {other:?}"),
        }
    }

    #[test]
    fn iid_ks_decays_with_exact_moments() {
        let kernel_row = [0.75, 0.25];
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
        let (mu, var) = crate::models::iid_logprob_moments(&marginal);
        let mut cfg = ExperimentConfig::new(
            FamilySpec::Affine(crate::family::AffineFamilySpec {
                a: vec![vec![0.75, 0.25], vec![0.75, 0.25]],
                b: vec![vec![-1.0, 1.0], vec![-1.0, 1.0]],
                omega: (-0.1, 0.1),
                theta0: 0.0,
            }),
            vec![
                vec![1.0 - eps + eps / 2.0, eps / 2.0],
                vec![eps / 2.0, 1.0 - eps + eps / 2.0],
            ],
            vec![64, 256, 1024],
            4000,
            11,
        );
        cfg.exact_moments = Some((mu, var));
        let report = run_clt(&cfg).unwrap();
        assert_eq!(report.moment_source, "exact");
        assert!(report.per_n[2].ks < report.per_n[0].ks, "{:?}", report.per_n);
        assert!(report.exponent.estimate < -0.2, "exponent {}", report.exponent.estimate);
    }
}
