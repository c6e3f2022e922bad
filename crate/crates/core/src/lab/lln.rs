//! Law-of-large-numbers experiment: per-n deviation quantiles of the
//! normalized log-likelihood derivative around its estimated limit.

use serde::{Deserialize, Serialize};

use super::{derive_seed, ExperimentConfig};
use crate::deriv::{estimate_l, normalized_loglik_values, LEstimate};
use crate::error::Result;
use crate::exec::{stream_rng, StreamKind};
use crate::numeric::{bootstrap_band, linear_fit, quantile, resample_into, FitWithBand};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LlnPoint {
    pub n: usize,
    pub median_dev: f64,
    pub p95_dev: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlnReport {
    pub l_hat: LEstimate,
    pub per_n: Vec<LlnPoint>,
    /// Median deviation decreases along the grid.
    pub monotone_decrease: bool,
    /// Log-log slope of the median deviation in n.
    pub fit_exponent: FitWithBand,
}

/// Runs the LLN deviation experiment described by `cfg`.
pub fn run_lln(cfg: &ExperimentConfig) -> Result<LlnReport> {
    let ctx = cfg.ctx()?;
    let (fam, channel, theta, order) = (ctx.family(), ctx.channel(), ctx.theta(), ctx.order());
    let n_ref = *cfg.n_grid.last().expect("validated nonempty grid");
    let l_hat = estimate_l(
        fam,
        channel,
        theta,
        order,
        n_ref.max(1000),
        cfg.reps.max(1000),
        derive_seed(cfg.seed, 1),
    )?;

    let mut per_n = Vec::with_capacity(cfg.n_grid.len());
    let mut devs_per_n = Vec::with_capacity(cfg.n_grid.len());
    for (gi, &n) in cfg.n_grid.iter().enumerate() {
        let values = normalized_loglik_values(
            fam,
            channel,
            theta,
            order,
            n,
            cfg.reps,
            derive_seed(cfg.seed, 100 + gi as u64),
        )?;
        let devs: Vec<f64> = values.iter().map(|v| (v - l_hat.value).abs()).collect();
        per_n.push(LlnPoint {
            n,
            median_dev: quantile(&devs, 0.5),
            p95_dev: quantile(&devs, 0.95),
        });
        devs_per_n.push(devs);
    }

    let monotone_decrease = per_n.windows(2).all(|w| w[1].median_dev <= w[0].median_dev);

    let ln_n: Vec<f64> = cfg.n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let slope_of = |medians: &[f64]| -> f64 {
        let ln_m: Vec<f64> = medians.iter().map(|m| m.max(1e-300).ln()).collect();
        linear_fit(&ln_n, &ln_m).1
    };
    let estimate = slope_of(&per_n.iter().map(|p| p.median_dev).collect::<Vec<_>>());
    let mut rng = stream_rng(derive_seed(cfg.seed, 3), StreamKind::Bootstrap, 0);
    let mut scratch = Vec::new();
    let fit_exponent = bootstrap_band(estimate, 1000, &mut rng, |rng| {
        let medians: Vec<f64> = devs_per_n
            .iter()
            .map(|devs| {
                resample_into(devs, &mut scratch, rng);
                quantile(&scratch, 0.5)
            })
            .collect();
        slope_of(&medians)
    });

    Ok(LlnReport { l_hat, per_n, monotone_decrease, fit_exponent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::FamilySpec;

    fn iid_cfg() -> ExperimentConfig {
        // memoryless: every row of the kernel equals (0.75, 0.25)
        let mut cfg = ExperimentConfig::new(
            FamilySpec::Affine(crate::family::AffineFamilySpec {
                a: vec![vec![0.75, 0.25], vec![0.75, 0.25]],
                b: vec![vec![-1.0, 1.0], vec![-1.0, 1.0]],
                omega: (-0.1, 0.1),
                theta0: 0.0,
            }),
            vec![vec![0.995, 0.005], vec![0.005, 0.995]],
            vec![200, 800, 3200, 12800],
            400,
            7,
        );
        cfg.order = 0;
        cfg
    }

    #[test]
    fn iid_median_deviation_scales_like_root_n() {
        let report = run_lln(&iid_cfg()).unwrap();
        assert!(report.monotone_decrease, "{:?}", report.per_n);
        assert!(
            (-0.6..=-0.4).contains(&report.fit_exponent.estimate),
            "exponent {}",
            report.fit_exponent.estimate
        );
    }

    #[test]
    fn canonical_model_median_deviation_shrinks_five_fold() {
        let mut cfg = ExperimentConfig::new(
            FamilySpec::Tilted { c: 0.2, theta0: 0.1, omega: (0.02, 0.6) },
            vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            vec![1000, 10_000, 100_000],
            200,
            19,
        );
        cfg.order = 0;
        let report = run_lln(&cfg).unwrap();
        let first = report.per_n[0].median_dev;
        let last = report.per_n[2].median_dev;
        assert!(last <= first / 5.0, "median {first} -> {last}");
    }

    #[test]
    fn quantiles_stable_across_seeds() {
        let mut cfg = iid_cfg();
        cfg.n_grid = vec![500, 2000];
        cfg.reps = 800;
        let a = run_lln(&cfg).unwrap();
        cfg.seed = 8;
        let b = run_lln(&cfg).unwrap();
        for (pa, pb) in a.per_n.iter().zip(&b.per_n) {
            // medians of |dev| concentrate like the mean: allow a few SE
            let scale = pa.median_dev.max(pb.median_dev);
            assert!(
                (pa.median_dev - pb.median_dev).abs() <= 0.25 * scale,
                "medians {} vs {}",
                pa.median_dev,
                pb.median_dev
            );
        }
    }
}
