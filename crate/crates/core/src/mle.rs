//! Maximum likelihood estimation of the scalar kernel parameter and the
//! convergence-rate experiment for the estimator.
//!
//! The optimizer is deterministic: a 41-point coarse grid over the compact
//! search interval, golden-section refinement of the bracket around the
//! best grid point, then Newton steps using the exact first and second
//! log-likelihood derivatives.

use serde::{Deserialize, Serialize};

use crate::deriv::{estimate_l, logp_derivs, model_at_theta0, LEstimate};
use crate::error::{Error, Result};
use crate::exec::{replica_map, stream_rng, StreamKind};
use crate::family::ParamFamily;
use crate::hmm::{for_each_sequence, simulate_hmm, EmissionChannel};
use crate::lab::{derive_seed, ExperimentConfig};
use crate::numeric::{bootstrap_band, linear_fit, quantile, resample_into, FitWithBand};

const COARSE_GRID: usize = 41;
const GOLDEN_TOL: f64 = 1e-6;
const NEWTON_MAX_ITERS: usize = 30;
/// Hessian-per-symbol magnitude below which the rate experiment refuses.
pub const HESSIAN_FLOOR: f64 = 0.05;

/// One maximum-likelihood fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MleResult {
    pub theta_hat: f64,
    pub loglik_at_hat: f64,
    pub d1_at_hat: f64,
    pub d2_at_hat: f64,
    /// Newton iterations taken after the bracketing phase.
    pub iterations: usize,
    pub converged: bool,
    /// The maximizer sits on the boundary of the search interval.
    pub boundary: bool,
    /// The second derivative at the returned point is not negative.
    pub non_concave: bool,
}

/// Maximizes log p^theta(z_1^n) over the compact interval `omega0`.
pub fn fit_mle(
    fam: &ParamFamily,
    channel: &EmissionChannel,
    z_seq: &[usize],
    omega0: (f64, f64),
) -> Result<MleResult> {
    let (lo, hi) = omega0;
    let omega = fam.omega();
    if !(lo < hi) || lo <= omega.0 || hi >= omega.1 {
        return Err(Error::InvalidArgument(format!(
            "search interval ({lo}, {hi}) must sit strictly inside omega ({}, {})",
            omega.0, omega.1
        )));
    }
    if z_seq.len() < 50 {
        return Err(Error::InvalidArgument(format!(
            "sequence of length {} too short for a fit; need >= 50",
            z_seq.len()
        )));
    }
    let n = z_seq.len() as f64;
    let value_at = |t: f64| -> f64 {
        logp_derivs(fam, channel, t, z_seq, 0, false)
            .map(|o| o.value)
            .unwrap_or(f64::NEG_INFINITY)
    };

    // coarse grid
    let span = hi - lo;
    let grid_at = |i: usize| lo + span * i as f64 / (COARSE_GRID - 1) as f64;
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..COARSE_GRID {
        let v = value_at(grid_at(i));
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }

    // golden-section refinement of the bracket around the best grid point
    let mut a = grid_at(best_i.saturating_sub(1));
    let mut b = grid_at((best_i + 1).min(COARSE_GRID - 1));
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = value_at(c);
    let mut fd = value_at(d);
    while b - a > GOLDEN_TOL {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = value_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = value_at(d);
        }
    }
    let mut theta = 0.5 * (a + b);

    // Newton refinement with exact derivatives, clamped to the interval
    let mut iterations = 0;
    let mut converged = false;
    let mut out = logp_derivs(fam, channel, theta, z_seq, 2, false)?;
    while iterations < NEWTON_MAX_ITERS {
        if out.d1.abs() <= 1e-6 * n {
            converged = true;
            break;
        }
        if out.d2 >= 0.0 {
            break; // not locally concave; keep the bracketing result
        }
        let step = -out.d1 / out.d2;
        let next = (theta + step).clamp(lo, hi);
        let moved = (next - theta).abs();
        theta = next;
        out = logp_derivs(fam, channel, theta, z_seq, 2, false)?;
        iterations += 1;
        if moved <= 1e-9 {
            converged = true;
            break;
        }
    }
    if out.d1.abs() <= 1e-6 * n {
        converged = true;
    }

    let boundary_eps = 1e-7 * span;
    let boundary = theta - lo <= boundary_eps || hi - theta <= boundary_eps;
    Ok(MleResult {
        theta_hat: theta,
        loglik_at_hat: out.value,
        d1_at_hat: out.d1,
        d2_at_hat: out.d2,
        iterations,
        converged: converged && !boundary,
        boundary,
        non_concave: out.d2 >= 0.0,
    })
}

/// Exact enumerated expectation of the score at the true parameter; the
/// returned residual should vanish.
pub fn score_identity_check(fam: &ParamFamily, channel: &EmissionChannel, n: usize) -> Result<f64> {
    if n > 8 {
        return Err(Error::InvalidArgument(format!("enumeration bound exceeded: n = {n} > 8")));
    }
    let t0 = fam.theta0();
    let mut acc = 0.0;
    let mut err: Option<Error> = None;
    for_each_sequence(channel.n_symbols(), n, |seq| {
        if err.is_some() {
            return;
        }
        match logp_derivs(fam, channel, t0, seq, 1, false) {
            Ok(out) => acc += out.value.exp() * out.d1,
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(acc.abs())
}

/// Enumerated expectation of the score at an arbitrary parameter (data law
/// stays at the true parameter). Nonzero away from the truth.
pub fn score_mean_at(fam: &ParamFamily, channel: &EmissionChannel, theta: f64, n: usize) -> Result<f64> {
    if n > 8 {
        return Err(Error::InvalidArgument(format!("enumeration bound exceeded: n = {n} > 8")));
    }
    let t0 = fam.theta0();
    let mut acc = 0.0;
    let mut err: Option<Error> = None;
    for_each_sequence(channel.n_symbols(), n, |seq| {
        if err.is_some() {
            return;
        }
        let weight = match logp_derivs(fam, channel, t0, seq, 0, false) {
            Ok(out) => out.value.exp(),
            Err(e) => {
                err = Some(e);
                return;
            }
        };
        match logp_derivs(fam, channel, theta, seq, 1, false) {
            Ok(out) => acc += weight * out.d1,
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(acc)
}

/// Empirical exceedance curve for one threshold.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub x: f64,
    pub p_hat: f64,
    pub stderr: f64,
    pub reps: usize,
    /// Fraction of fits excluded for boundary contact or non-convergence.
    pub excluded_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    /// Estimated per-symbol second derivative at the true parameter.
    pub l2_hat: LEstimate,
    /// Points grouped by threshold, each covering the full length grid.
    pub points: Vec<RatePoint>,
    /// Per-threshold monotone-decrease verdicts.
    pub decreasing: Vec<bool>,
    /// (n, median |theta_hat - theta0|) over included fits.
    pub medians: Vec<(usize, f64)>,
    /// Log-log slope of the median error in n.
    pub median_slope: FitWithBand,
}

/// Convergence-rate experiment: repeated fits at each length, exceedance
/// probabilities per threshold, and the median-error decay slope.
///
/// Fits that end on the search boundary or fail to converge are excluded
/// from the curves; their fraction is reported per length.
pub fn run_rate_experiment(cfg: &ExperimentConfig, x_list: &[f64], omega0: (f64, f64)) -> Result<RateReport> {
    cfg.validate()?;
    let fam = cfg.family.build()?;
    let channel = EmissionChannel::new(&cfg.channel)?;
    let theta0 = fam.theta0();
    if x_list.is_empty() {
        return Err(Error::InvalidArgument("x_list must be nonempty".into()));
    }

    let l2_hat = estimate_l(&fam, &channel, theta0, 2, 2000, 1000, derive_seed(cfg.seed, 9))?;
    if l2_hat.value.abs() < HESSIAN_FLOOR {
        return Err(Error::HessianDegenerate { l2: l2_hat.value, floor: HESSIAN_FLOOR });
    }

    let data_model = model_at_theta0(&fam, &channel)?;
    let mut errors_per_n: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_grid.len());
    let mut excluded_per_n: Vec<f64> = Vec::with_capacity(cfg.n_grid.len());
    for (gi, &n) in cfg.n_grid.iter().enumerate() {
        let seed = derive_seed(cfg.seed, 500 + gi as u64);
        let fits: Vec<Option<f64>> = replica_map(cfg.reps, |r| {
            let mut rng = stream_rng(seed, StreamKind::Replica, r as u64);
            let (_, symbols) = simulate_hmm(&data_model, n, &mut rng);
            match fit_mle(&fam, &channel, &symbols, omega0) {
                Ok(res) if res.converged && !res.boundary => Some(res.theta_hat),
                _ => None,
            }
        });
        let included: Vec<f64> = fits.iter().flatten().map(|t| (t - theta0).abs()).collect();
        excluded_per_n.push(1.0 - included.len() as f64 / cfg.reps as f64);
        errors_per_n.push(included);
    }

    let mut points = Vec::new();
    let mut decreasing = Vec::new();
    for &x in x_list {
        let mut these = Vec::with_capacity(cfg.n_grid.len());
        for ((&n, errors), &excluded) in cfg.n_grid.iter().zip(&errors_per_n).zip(&excluded_per_n) {
            let m = errors.len().max(1);
            let k = errors.iter().filter(|&&e| e >= x).count();
            let p_hat = k as f64 / m as f64;
            these.push(RatePoint {
                n,
                x,
                p_hat,
                stderr: (p_hat * (1.0 - p_hat) / m as f64).sqrt(),
                reps: errors.len(),
                excluded_fraction: excluded,
            });
        }
        decreasing.push(
            these
                .windows(2)
                .all(|w| w[1].p_hat <= w[0].p_hat + 2.0 * (w[0].stderr + w[1].stderr)),
        );
        points.extend(these);
    }

    let medians: Vec<(usize, f64)> = cfg
        .n_grid
        .iter()
        .zip(&errors_per_n)
        .map(|(&n, errors)| (n, quantile(errors, 0.5)))
        .collect();
    let ln_n: Vec<f64> = cfg.n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let slope_of = |meds: &[f64]| -> f64 {
        let ln_m: Vec<f64> = meds.iter().map(|m| m.max(1e-300).ln()).collect();
        linear_fit(&ln_n, &ln_m).1
    };
    let estimate = slope_of(&medians.iter().map(|m| m.1).collect::<Vec<_>>());
    let mut rng = stream_rng(derive_seed(cfg.seed, 10), StreamKind::Bootstrap, 0);
    let mut scratch = Vec::new();
    let median_slope = bootstrap_band(estimate, 1000, &mut rng, |rng| {
        let meds: Vec<f64> = errors_per_n
            .iter()
            .map(|errors| {
                resample_into(errors, &mut scratch, rng);
                quantile(&scratch, 0.5)
            })
            .collect();
        slope_of(&meds)
    });

    Ok(RateReport { l2_hat, points, decreasing, medians, median_slope })
}
