//! Sub-exponential tail experiment: empirical P(S_n / n >= x) along the
//! length grid, with Clopper-Pearson upper bounds where no exceedances
//! occur and a fitted sub-exponential decay.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, ExperimentConfig};
use crate::error::Result;
use crate::exec::{replica_map, stream_rng, StreamKind};
use crate::numeric::{clopper_pearson_upper, linear_fit, quantile};
use crate::stats::PILOT_LEN;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailPoint {
    pub n: usize,
    pub x: f64,
    pub exceedances: usize,
    pub reps: usize,
    pub p_hat: f64,
    pub stderr: f64,
    /// 95% Clopper-Pearson upper bound; informative when p_hat = 0.
    pub upper95: f64,
}

/// Fitted sub-exponential tail log P ~ log c + n^(1-eps) * log gamma.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SubExpFit {
    pub gamma: f64,
    pub eps: f64,
    pub c: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailReport {
    /// Points in (x, n) order: for each threshold, the full length grid.
    pub points: Vec<TailPoint>,
    /// Per-threshold fits over lengths with at least one exceedance.
    pub fits: Vec<Option<SubExpFit>>,
    /// Per-threshold monotone-decrease verdicts (within 2 SE slack).
    pub decreasing: Vec<bool>,
    /// Set when a threshold saw no exceedances at any length.
    pub no_exceedances: Vec<bool>,
    /// Exceedance count at the smallest length per threshold; fewer than 5
    /// flags a rare-event regime.
    pub smallest_n_exceedances: Vec<usize>,
}

/// Runs the tail experiment for every threshold in `cfg.x_list`.
pub fn run_chernoff(cfg: &ExperimentConfig) -> Result<TailReport> {
    let ctx = cfg.ctx()?;
    if cfg.x_list.is_empty() || cfg.x_list.iter().any(|&x| x <= 0.0) {
        return Err(crate::error::Error::InvalidArgument(
            "x_list must contain positive thresholds".into(),
        ));
    }
    let (mu, _) = ctx.long_run_mean(PILOT_LEN, derive_seed(cfg.seed, 6));

    // per length: replica partial sums S_n / n
    let mut means_per_n: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_grid.len());
    for (gi, &n) in cfg.n_grid.iter().enumerate() {
        let seed = derive_seed(cfg.seed, 300 + gi as u64);
        let means: Vec<f64> = replica_map(cfg.reps, |r| {
            let mut rng = stream_rng(seed, StreamKind::Replica, r as u64);
            let symbols = ctx.simulate_symbols(n, &mut rng);
            let s: f64 = ctx.raw_increments(&symbols).iter().map(|v| v - mu).sum();
            s / n as f64
        });
        means_per_n.push(means);
    }

    let mut points = Vec::new();
    let mut fits = Vec::new();
    let mut decreasing = Vec::new();
    let mut no_exceedances = Vec::new();
    let mut smallest = Vec::new();
    for &x in &cfg.x_list {
        let mut these = Vec::with_capacity(cfg.n_grid.len());
        for (&n, means) in cfg.n_grid.iter().zip(&means_per_n) {
            let exceedances = means.iter().filter(|&&m| m >= x).count();
            let p_hat = exceedances as f64 / cfg.reps as f64;
            these.push(TailPoint {
                n,
                x,
                exceedances,
                reps: cfg.reps,
                p_hat,
                stderr: (p_hat * (1.0 - p_hat) / cfg.reps as f64).sqrt(),
                upper95: clopper_pearson_upper(exceedances, cfg.reps, 0.05),
            });
        }
        decreasing.push(
            these
                .windows(2)
                .all(|w| w[1].p_hat <= w[0].p_hat + 2.0 * (w[0].stderr + w[1].stderr)),
        );
        no_exceedances.push(these.iter().all(|p| p.exceedances == 0));
        smallest.push(these[0].exceedances);
        fits.push(fit_subexponential(&these, derive_seed(cfg.seed, 7)));
        points.extend(these);
    }

    Ok(TailReport {
        points,
        fits,
        decreasing,
        no_exceedances,
        smallest_n_exceedances: smallest,
    })
}

/// Grid search over eps with least squares on log p versus n^(1-eps).
/// Needs at least two lengths with exceedances.
fn fit_subexponential(points: &[TailPoint], seed: u64) -> Option<SubExpFit> {
    let usable: Vec<&TailPoint> = points.iter().filter(|p| p.exceedances > 0).collect();
    if usable.len() < 2 {
        return None;
    }
    let fit_for = |ps: &[(f64, f64)]| -> (f64, f64, f64, f64) {
        // returns (eps, ln_gamma, ln_c, sse)
        let mut best = (0.0, 0.0, 0.0, f64::INFINITY);
        let mut eps = 0.0;
        while eps <= 0.9 + 1e-9 {
            let xs: Vec<f64> = ps.iter().map(|&(n, _)| n.powf(1.0 - eps)).collect();
            let ys: Vec<f64> = ps.iter().map(|&(_, p)| p).collect();
            let (c, g) = linear_fit(&xs, &ys);
            let sse: f64 = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (y - c - g * x) * (y - c - g * x))
                .sum();
            if sse < best.3 {
                best = (eps, g, c, sse);
            }
            eps += 0.05;
        }
        best
    };
    let base: Vec<(f64, f64)> = usable.iter().map(|p| (p.n as f64, p.p_hat.ln())).collect();
    let (eps, ln_gamma, ln_c, _) = fit_for(&base);

    // binomial resampling band on gamma
    let mut rng = stream_rng(seed, StreamKind::Bootstrap, 0);
    let mut gammas = Vec::with_capacity(500);
    for _ in 0..1000 {
        let resampled: Vec<(f64, f64)> = usable
            .iter()
            .filter_map(|p| {
                let mut k = 0usize;
                for _ in 0..p.reps {
                    if rng.gen::<f64>() < p.p_hat {
                        k += 1;
                    }
                }
                (k > 0).then(|| (p.n as f64, (k as f64 / p.reps as f64).ln()))
            })
            .collect();
        if resampled.len() >= 2 {
            gammas.push(fit_for(&resampled).1.exp());
        }
    }
    let (gamma_lo, gamma_hi) = if gammas.len() >= 10 {
        (quantile(&gammas, 0.025), quantile(&gammas, 0.975))
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    Some(SubExpFit { gamma: ln_gamma.exp(), eps, c: ln_c.exp(), gamma_lo, gamma_hi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::FamilySpec;

    #[test]
    fn tails_shrink_with_n_and_vanish_beyond_increment_bound() {
        let mut cfg = ExperimentConfig::new(
            FamilySpec::Tilted { c: 0.2, theta0: 0.1, omega: (0.02, 0.6) },
            vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            vec![200, 632, 2000],
            2000,
            13,
        );
        cfg.order = 0;
        // an x far above any centered increment magnitude, and a moderate one
        cfg.x_list = vec![0.05, 10.0];
        let report = run_chernoff(&cfg).unwrap();
        assert!(report.decreasing[0], "{:?}", report.points);
        // the huge threshold can never be exceeded by bounded increments
        let huge: Vec<&TailPoint> = report.points.iter().filter(|p| p.x == 10.0).collect();
        assert!(huge.iter().all(|p| p.exceedances == 0));
        assert!(report.no_exceedances[1]);
        assert!(!report.no_exceedances[0]);
        // the moderate threshold must actually be informative at small n
        assert!(report.smallest_n_exceedances[0] >= 5);
        let fit = report.fits[0].expect("fit exists");
        assert!(fit.gamma < 1.0, "gamma {}", fit.gamma);
    }
}
