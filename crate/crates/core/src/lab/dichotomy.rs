//! Variance-growth dichotomy diagnostic: E[S_n^2] either stays bounded
//! (telescoping increments) or grows linearly (positive long-run variance).
//! The experiment fits both one-parameter models in log space and reports
//! the better one.

use serde::{Deserialize, Serialize};

use super::{derive_seed, ExperimentConfig};
use crate::error::{Error, Result};
use crate::exec::{replica_map, stream_rng, StreamKind};
use crate::numeric::{mean, stderr_of_mean};
use crate::stats::PILOT_LEN;

/// What increment process the diagnostic runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum IncrementSource {
    /// The configured model's per-symbol increments, long-run centered.
    Model,
    /// Telescoping construction X_i = g(Z_i) - g(Z_{i+1}) with per-symbol
    /// values g; partial sums collapse to a boundary difference.
    Coboundary { g: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DichotomyVerdict {
    Bounded,
    LinearGrowth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DichotomyReport {
    /// (n, mean S_n^2, stderr) per grid point.
    pub points: Vec<(usize, f64, f64)>,
    pub sse_bounded: f64,
    pub sse_linear: f64,
    pub verdict: DichotomyVerdict,
    /// Fitted constant of the preferred model: the bound for Bounded, the
    /// per-step slope for LinearGrowth.
    pub level: f64,
    /// Log-log slope of E[S_n^2] in n, for reference.
    pub loglog_slope: f64,
}

/// Runs the dichotomy diagnostic. The grid must span at least two decades.
pub fn variance_dichotomy(cfg: &ExperimentConfig, source: &IncrementSource) -> Result<DichotomyReport> {
    let ctx = cfg.ctx()?;
    let first = *cfg.n_grid.first().expect("validated nonempty grid") as f64;
    let last = *cfg.n_grid.last().expect("validated nonempty grid") as f64;
    if last / first < 100.0 {
        return Err(Error::InvalidArgument(format!(
            "n_grid spans {:.1}x; the diagnostic needs at least two decades",
            last / first
        )));
    }
    if let IncrementSource::Coboundary { g } = source {
        if g.len() != ctx.channel().n_symbols() {
            return Err(Error::DimensionMismatch(format!(
                "coboundary table has {} entries for {} symbols",
                g.len(),
                ctx.channel().n_symbols()
            )));
        }
    }
    let mu = match source {
        IncrementSource::Model => ctx.long_run_mean(PILOT_LEN, derive_seed(cfg.seed, 8)).0,
        IncrementSource::Coboundary { .. } => 0.0,
    };

    let mut points = Vec::with_capacity(cfg.n_grid.len());
    for (gi, &n) in cfg.n_grid.iter().enumerate() {
        let seed = derive_seed(cfg.seed, 400 + gi as u64);
        let squares: Vec<f64> = replica_map(cfg.reps, |r| {
            let mut rng = stream_rng(seed, StreamKind::Replica, r as u64);
            let s = match source {
                IncrementSource::Model => {
                    let symbols = ctx.simulate_symbols(n, &mut rng);
                    ctx.raw_increments(&symbols).iter().map(|v| v - mu).sum::<f64>()
                }
                IncrementSource::Coboundary { g } => {
                    let symbols = ctx.simulate_symbols(n + 1, &mut rng);
                    symbols.windows(2).map(|w| g[w[0]] - g[w[1]]).sum::<f64>()
                }
            };
            s * s
        });
        points.push((n, mean(&squares), stderr_of_mean(&squares)));
    }

    // one-parameter fits in log space: constant level vs. linear growth
    let ln_m: Vec<f64> = points.iter().map(|p| p.1.max(1e-300).ln()).collect();
    let ln_n: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let c_bounded = mean(&ln_m);
    let sse_bounded: f64 = ln_m.iter().map(|v| (v - c_bounded) * (v - c_bounded)).sum();
    let resid: Vec<f64> = ln_m.iter().zip(&ln_n).map(|(m, n)| m - n).collect();
    let c_linear = mean(&resid);
    let sse_linear: f64 = resid.iter().map(|v| (v - c_linear) * (v - c_linear)).sum();

    let verdict = if sse_linear < sse_bounded {
        DichotomyVerdict::LinearGrowth
    } else {
        DichotomyVerdict::Bounded
    };
    let level = match verdict {
        DichotomyVerdict::Bounded => c_bounded.exp(),
        DichotomyVerdict::LinearGrowth => c_linear.exp(),
    };
    let loglog_slope = crate::numeric::linear_fit(&ln_n, &ln_m).1;

    Ok(DichotomyReport { points, sse_bounded, sse_linear, verdict, level, loglog_slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::FamilySpec;

    fn base_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            FamilySpec::Tilted { c: 0.2, theta0: 0.1, omega: (0.02, 0.6) },
            vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            vec![16, 64, 256, 1024, 4096],
            400,
            21,
        );
        cfg.order = 0;
        cfg
    }

    #[test]
    fn model_increments_grow_linearly() {
        let report = variance_dichotomy(&base_cfg(), &IncrementSource::Model).unwrap();
        assert_eq!(report.verdict, DichotomyVerdict::LinearGrowth);
        assert!(report.loglog_slope > 0.8, "slope {}", report.loglog_slope);
    }

    #[test]
    fn telescoping_increments_stay_bounded() {
        let source = IncrementSource::Coboundary { g: vec![0.0, 1.7] };
        let report = variance_dichotomy(&base_cfg(), &source).unwrap();
        assert_eq!(report.verdict, DichotomyVerdict::Bounded);
        assert!(report.loglog_slope.abs() < 0.3, "slope {}", report.loglog_slope);
    }

    #[test]
    fn iid_slope_matches_increment_variance() {
        let mut cfg = base_cfg();
        cfg.family = FamilySpec::Affine(crate::family::AffineFamilySpec {
            a: vec![vec![0.75, 0.25], vec![0.75, 0.25]],
            b: vec![vec![-1.0, 1.0], vec![-1.0, 1.0]],
            omega: (-0.1, 0.1),
            theta0: 0.0,
        });
        cfg.channel = vec![vec![0.995, 0.005], vec![0.005, 0.995]];
        cfg.reps = 3000;
        let report = variance_dichotomy(&cfg, &IncrementSource::Model).unwrap();
        assert_eq!(report.verdict, DichotomyVerdict::LinearGrowth);
        let marginal = vec![
            0.75 * 0.995 + 0.25 * 0.005,
            0.75 * 0.005 + 0.25 * 0.995,
        ];
        let (_, var) = crate::models::iid_logprob_moments(&marginal);
        assert!(
            (report.level - var).abs() <= 0.05 * var,
            "level {} vs var {}",
            report.level,
            var
        );
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let mut cfg = base_cfg();
        cfg.n_grid = vec![100, 200, 400];
        assert!(matches!(
            variance_dichotomy(&cfg, &IncrementSource::Model),
            Err(Error::InvalidArgument(_))
        ));
    }
}
