//! Statistics of the per-symbol increment process: centered increments,
//! partial-sum variances, limiting autocovariances and the long-run
//! variance, alternating block partitions with truncated block sums, and
//! moment growth fits.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::deriv::{model_at_theta0, DerivFilter, SymbolMats};
use crate::error::{Error, Result};
use crate::exec::{replica_map, stream_rng, StreamKind};
use crate::family::ParamFamily;
use crate::hmm::{for_each_sequence, simulate_hmm, EmissionChannel, HmmSpec};
use crate::numeric::{
    bootstrap_band, linear_fit, mean, sample_variance, stderr_of_mean, stderr_of_variance,
    FitWithBand,
};

/// Default pilot length for long-run centering.
pub const PILOT_LEN: usize = 100_000;
/// Largest series length admitting exact enumeration centering.
pub const EXACT_CENTERING_MAX_N: usize = 10;

/// How the increment series is centered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CenteringMode {
    /// Per-index means computed by exact enumeration (small n only).
    ExactEnumeration,
    /// One long-run mean from a pilot trajectory.
    LongRun,
}

/// A model bound to one (parameter, derivative order) pair: everything the
/// increment process needs.
#[derive(Debug, Clone)]
pub struct ModelCtx {
    fam: ParamFamily,
    channel: EmissionChannel,
    theta: f64,
    order: usize,
    mats: SymbolMats,
    data_model: HmmSpec,
}

impl ModelCtx {
    pub fn new(fam: ParamFamily, channel: EmissionChannel, theta: f64, order: usize) -> Result<Self> {
        let mats = SymbolMats::build(&fam, &channel, theta, order)?;
        let data_model = model_at_theta0(&fam, &channel)?;
        Ok(Self { fam, channel, theta, order, mats, data_model })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn family(&self) -> &ParamFamily {
        &self.fam
    }

    pub fn channel(&self) -> &EmissionChannel {
        &self.channel
    }

    /// The observation model at the true parameter.
    pub fn data_model(&self) -> &HmmSpec {
        &self.data_model
    }

    pub fn simulate_symbols(&self, n: usize, rng: &mut impl Rng) -> Vec<usize> {
        simulate_hmm(&self.data_model, n, rng).1
    }

    /// Uncentered per-symbol increments of the chosen order along `symbols`.
    pub fn raw_increments(&self, symbols: &[usize]) -> Vec<f64> {
        let mut filter = DerivFilter::start(&self.mats);
        symbols
            .iter()
            .map(|&z| filter.step(&self.mats, z).order(self.order))
            .collect()
    }

    /// Increments recomputed with the conditioning window cut at
    /// `window_start`: the filter restarts from stationarity there and the
    /// increments for `range` are returned.
    pub fn windowed_increments(&self, symbols: &[usize], window_start: usize, range: Range<usize>) -> Vec<f64> {
        debug_assert!(window_start <= range.start);
        let mut filter = DerivFilter::start(&self.mats);
        for &z in &symbols[window_start..range.start] {
            filter.step(&self.mats, z);
        }
        symbols[range]
            .iter()
            .map(|&z| filter.step(&self.mats, z).order(self.order))
            .collect()
    }

    /// Long-run mean of the increment from a pilot trajectory, with a batch
    ///-means standard error as the attached bias estimate.
    pub fn long_run_mean(&self, pilot_len: usize, seed: u64) -> (f64, f64) {
        let mut rng = stream_rng(seed, StreamKind::Pilot, 0);
        let symbols = self.simulate_symbols(pilot_len, &mut rng);
        let incs = self.raw_increments(&symbols);
        let mu = mean(&incs);
        let batches = 20.min(pilot_len / 50).max(2);
        let batch_len = pilot_len / batches;
        let batch_means: Vec<f64> = (0..batches)
            .map(|b| mean(&incs[b * batch_len..(b + 1) * batch_len]))
            .collect();
        (mu, stderr_of_mean(&batch_means))
    }

    /// Exact per-index increment means by enumeration over all sequences of
    /// length `n` (weights from the law at the true parameter).
    pub fn exact_stepwise_means(&self, n: usize) -> Vec<f64> {
        let mats0 = SymbolMats::build(&self.fam, &self.channel, self.fam.theta0(), 0)
            .expect("theta0 is admissible");
        let mut means = vec![0.0; n];
        for_each_sequence(self.channel.n_symbols(), n, |seq| {
            let mut weight_filter = DerivFilter::start(&mats0);
            let mut inc_filter = DerivFilter::start(&self.mats);
            for &z in seq {
                weight_filter.step(&mats0, z);
            }
            let weight = weight_filter.logp.exp();
            for (i, &z) in seq.iter().enumerate() {
                means[i] += weight * inc_filter.step(&self.mats, z).order(self.order);
            }
        });
        means
    }
}

/// A centered increment series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncrementSeries {
    pub n: usize,
    pub x: Vec<f64>,
    pub centering: CenteringMode,
    /// Standard-error-style estimate of the centering bias (0 for exact
    /// centering).
    pub centering_bias: f64,
}

/// Builds the centered increment series X_i along one simulated trajectory.
pub fn build_increments(
    ctx: &ModelCtx,
    n: usize,
    seed: u64,
    centering: CenteringMode,
) -> Result<IncrementSeries> {
    let mut rng = stream_rng(seed, StreamKind::Trajectory, 0);
    let symbols = ctx.simulate_symbols(n, &mut rng);
    let raw = ctx.raw_increments(&symbols);
    match centering {
        CenteringMode::ExactEnumeration => {
            if n > EXACT_CENTERING_MAX_N {
                return Err(Error::InvalidArgument(format!(
                    "exact centering needs n <= {EXACT_CENTERING_MAX_N}, got {n}"
                )));
            }
            let means = ctx.exact_stepwise_means(n);
            let x = raw.iter().zip(&means).map(|(v, m)| v - m).collect();
            Ok(IncrementSeries { n, x, centering, centering_bias: 0.0 })
        }
        CenteringMode::LongRun => {
            let (mu, bias) = ctx.long_run_mean(PILOT_LEN.max(n / 10), seed);
            let x = raw.iter().map(|v| v - mu).collect();
            Ok(IncrementSeries { n, x, centering, centering_bias: bias })
        }
    }
}

/// Limiting autocovariances and the long-run variance they assemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutocovSeries {
    /// a_j for j = 0..=j_max.
    pub a: Vec<f64>,
    /// Replica-spread standard error per lag.
    pub a_stderr: Vec<f64>,
    pub j_max: usize,
    /// a_0 + 2 sum_{j>=1} a_j.
    pub sigma2: f64,
    /// Replica-spread standard error of sigma2.
    pub sigma2_stderr: f64,
    pub n: usize,
    pub reps: usize,
}

/// Estimates a_j = lim_i E[X_i X_{i+j}] by time-and-replica averages with a
/// burn-in of half the trajectory, then assembles the long-run variance.
pub fn autocov(ctx: &ModelCtx, j_max: usize, n: usize, reps: usize, seed: u64) -> Result<AutocovSeries> {
    if j_max > n / 10 {
        return Err(Error::InvalidArgument(format!("j_max = {j_max} exceeds n/10 = {}", n / 10)));
    }
    let (mu, _) = ctx.long_run_mean(PILOT_LEN, seed);
    let burn = n / 2;
    let per_replica: Vec<Vec<f64>> = replica_map(reps, |r| {
        let mut rng = stream_rng(seed, StreamKind::Replica, r as u64);
        let symbols = ctx.simulate_symbols(n, &mut rng);
        let x: Vec<f64> = ctx.raw_increments(&symbols).iter().map(|v| v - mu).collect();
        (0..=j_max)
            .map(|j| {
                let upper = n - j;
                let count = (upper - burn) as f64;
                let mut acc = 0.0;
                for i in burn..upper {
                    acc += x[i] * x[i + j];
                }
                acc / count
            })
            .collect()
    });
    let mut a = Vec::with_capacity(j_max + 1);
    let mut a_stderr = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        let vals: Vec<f64> = per_replica.iter().map(|v| v[j]).collect();
        a.push(mean(&vals));
        a_stderr.push(stderr_of_mean(&vals));
    }
    let per_replica_sigma2: Vec<f64> = per_replica
        .iter()
        .map(|v| v[0] + 2.0 * v[1..].iter().sum::<f64>())
        .collect();
    let sigma2 = a[0] + 2.0 * a[1..].iter().sum::<f64>();
    if sigma2 < -1e-9 {
        return Err(Error::NegativeVarianceEstimate(sigma2));
    }
    Ok(AutocovSeries {
        a,
        a_stderr,
        j_max,
        sigma2,
        sigma2_stderr: stderr_of_mean(&per_replica_sigma2),
        n,
        reps,
    })
}

/// Partial-sum variance at one length.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PartialSumStats {
    pub n: usize,
    pub reps: usize,
    /// Mean of S_n across replicas.
    pub mean_s: f64,
    /// Var(S_n) across replicas.
    pub var_s: f64,
    /// Var(S_n) / n.
    pub ratio: f64,
    /// Standard error of the ratio.
    pub stderr: f64,
}

/// Var(S_n)/n along a grid of lengths, plus the fitted convergence exponent
/// of the ratio toward its final-grid value (reported, no threshold).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceCurve {
    pub points: Vec<PartialSumStats>,
    pub fit_exponent: FitWithBand,
}

fn partial_sums(ctx: &ModelCtx, n: usize, reps: usize, mu: f64, seed: u64) -> Vec<f64> {
    replica_map(reps, |r| {
        let mut rng = stream_rng(seed, StreamKind::Replica, r as u64);
        let symbols = ctx.simulate_symbols(n, &mut rng);
        ctx.raw_increments(&symbols).iter().map(|v| v - mu).sum()
    })
}

/// Monte Carlo variance ratios Var(S_n)/n over `n_grid`.
pub fn variance_curve(ctx: &ModelCtx, n_grid: &[usize], reps: usize, seed: u64) -> Result<VarianceCurve> {
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n_grid must be strictly increasing".into()));
    }
    let (mu, _) = ctx.long_run_mean(PILOT_LEN, seed);
    let mut points = Vec::with_capacity(n_grid.len());
    let mut sums_per_n = Vec::with_capacity(n_grid.len());
    for (gi, &n) in n_grid.iter().enumerate() {
        let sums = partial_sums(ctx, n, reps, mu, seed.wrapping_add(gi as u64));
        let var = sample_variance(&sums);
        points.push(PartialSumStats {
            n,
            reps,
            mean_s: mean(&sums),
            var_s: var,
            ratio: var / n as f64,
            stderr: stderr_of_variance(&sums) / n as f64,
        });
        sums_per_n.push(sums);
    }
    let fit_exponent = fit_ratio_convergence(&points, &sums_per_n, seed);
    Ok(VarianceCurve { points, fit_exponent })
}

/// Fits |ratio_n - ratio_last| ~ n^e over the grid interior, with a
/// resampling band. The last grid point stands in for the limit.
fn fit_ratio_convergence(points: &[PartialSumStats], sums_per_n: &[Vec<f64>], seed: u64) -> FitWithBand {
    let compute = |ratios: &[f64]| -> f64 {
        let last = *ratios.last().unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (p, &r) in points.iter().zip(ratios).take(ratios.len() - 1) {
            let gap = (r - last).abs();
            if gap > 0.0 {
                xs.push((p.n as f64).ln());
                ys.push(gap.ln());
            }
        }
        if xs.len() < 2 {
            return f64::NAN;
        }
        linear_fit(&xs, &ys).1
    };
    let ratios: Vec<f64> = points.iter().map(|p| p.ratio).collect();
    let estimate = compute(&ratios);
    let mut rng = stream_rng(seed, StreamKind::Bootstrap, 0);
    let mut scratch: Vec<f64> = Vec::new();
    bootstrap_band(estimate, 1000, &mut rng, |rng| {
        let resampled: Vec<f64> = sums_per_n
            .iter()
            .map(|sums| {
                crate::numeric::resample_into(sums, &mut scratch, rng);
                sample_variance(&scratch) / (scratch.len() as f64)
            })
            .zip(points)
            .map(|(var_over_reps, p)| var_over_reps * p.reps as f64 / p.n as f64)
            .collect();
        compute(&resampled)
    })
}

/// Alternating partition of 1..n into short blocks of length ~n^beta and
/// long blocks of length ~n^alpha, short block first in each pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub short_len: usize,
    pub long_len: usize,
    /// Number of (short, long) pairs; the covered prefix is
    /// k * (short_len + long_len) and the leftover tail is shorter than one
    /// pair.
    pub k: usize,
}

/// Floor of n^e with a snap to the nearest integer when the power underruns
/// it by floating-point noise.
fn powf_floor(n: usize, e: f64) -> usize {
    let v = (n as f64).powf(e);
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        v.floor() as usize
    }
}

/// Deterministic block partition from (n, alpha, beta).
pub fn make_blocks(n: usize, alpha: f64, beta: f64) -> Result<BlockPartition> {
    if !(0.0 < beta && beta < alpha && alpha < 1.0) {
        return Err(Error::BadExponents { alpha, beta });
    }
    let short_len = powf_floor(n, beta).max(1);
    let long_len = powf_floor(n, alpha).max(1);
    let pair = short_len + long_len;
    let k = n / pair;
    if k == 0 {
        return Err(Error::TooShort { n, pair });
    }
    Ok(BlockPartition { n, alpha, beta, short_len, long_len, k })
}

impl BlockPartition {
    pub fn pair_len(&self) -> usize {
        self.short_len + self.long_len
    }

    /// 0-based index range of short block `i`.
    pub fn short_range(&self, i: usize) -> Range<usize> {
        let start = i * self.pair_len();
        start..start + self.short_len
    }

    /// 0-based index range of long block `i`.
    pub fn long_range(&self, i: usize) -> Range<usize> {
        let start = i * self.pair_len() + self.short_len;
        start..start + self.long_len
    }

    pub fn covered_prefix(&self) -> usize {
        self.k * self.pair_len()
    }
}

/// Long-block sums and their truncated versions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockSums {
    pub zeta: Vec<f64>,
    pub zeta_hat: Vec<f64>,
    pub max_gap: f64,
}

/// Computes long-block sums along one simulated trajectory together with
/// truncated versions whose conditioning window is cut half a long block
/// before the block starts. Both use the same long-run centering, so the
/// truncation gap isolates the conditioning window's effect.
pub fn truncated_block_sums(ctx: &ModelCtx, part: &BlockPartition, seed: u64) -> Result<BlockSums> {
    let (mu, _) = ctx.long_run_mean(PILOT_LEN, seed);
    let mut rng = stream_rng(seed, StreamKind::Trajectory, 0);
    let symbols = ctx.simulate_symbols(part.n, &mut rng);
    Ok(block_sums_on(ctx, part, &symbols, mu))
}

/// Block sums for a given trajectory and centering constant.
pub fn block_sums_on(ctx: &ModelCtx, part: &BlockPartition, symbols: &[usize], mu: f64) -> BlockSums {
    let raw = ctx.raw_increments(symbols);
    let half = part.long_len / 2;
    let mut zeta = Vec::with_capacity(part.k);
    let mut zeta_hat = Vec::with_capacity(part.k);
    let mut max_gap = 0.0f64;
    for i in 0..part.k {
        let range = part.long_range(i);
        let full: f64 = raw[range.clone()].iter().map(|v| v - mu).sum();
        let cut = range.start.saturating_sub(half);
        let windowed = ctx.windowed_increments(symbols, cut, range.clone());
        let truncated: f64 = windowed.iter().map(|v| v - mu).sum();
        max_gap = max_gap.max((full - truncated).abs());
        zeta.push(full);
        zeta_hat.push(truncated);
    }
    BlockSums { zeta, zeta_hat, max_gap }
}

/// Fitted growth exponent of E[|S_n|^m] in n.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentGrowthFit {
    pub moment: u32,
    /// (n, mean |S_n|^m) per grid point.
    pub points: Vec<(usize, f64)>,
    pub exponent: FitWithBand,
}

/// Log-log fit of E[|S_n|^m] across `n_grid` with a bootstrap band.
pub fn moment_growth(
    ctx: &ModelCtx,
    moment: u32,
    n_grid: &[usize],
    reps: usize,
    seed: u64,
) -> Result<MomentGrowthFit> {
    if reps < 1000 {
        return Err(Error::InvalidArgument(format!("need reps >= 1000, got {reps}")));
    }
    if !(2..=4).contains(&moment) {
        return Err(Error::InvalidArgument(format!("moment must be 2, 3, or 4, got {moment}")));
    }
    let (mu, _) = ctx.long_run_mean(PILOT_LEN, seed);
    let mut abs_powers: Vec<Vec<f64>> = Vec::with_capacity(n_grid.len());
    for (gi, &n) in n_grid.iter().enumerate() {
        let sums = partial_sums(ctx, n, reps, mu, seed.wrapping_add(gi as u64));
        abs_powers.push(sums.iter().map(|s| s.abs().powi(moment as i32)).collect());
    }
    let points: Vec<(usize, f64)> = n_grid
        .iter()
        .zip(&abs_powers)
        .map(|(&n, v)| (n, mean(v)))
        .collect();
    let ln_n: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let fit = |vals: &[f64]| -> f64 {
        let ln_m: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
        linear_fit(&ln_n, &ln_m).1
    };
    let estimate = fit(&points.iter().map(|p| p.1).collect::<Vec<_>>());
    let mut rng = stream_rng(seed, StreamKind::Bootstrap, 1);
    let mut scratch = Vec::new();
    let exponent = bootstrap_band(estimate, 1000, &mut rng, |rng| {
        let means: Vec<f64> = abs_powers
            .iter()
            .map(|v| {
                crate::numeric::resample_into(v, &mut scratch, rng);
                mean(&scratch)
            })
            .collect();
        fit(&means)
    });
    Ok(MomentGrowthFit { moment, points, exponent })
}

/// Exact Var(S_n) by enumeration (small n), under exact per-index centering.
pub fn exact_partial_sum_variance(ctx: &ModelCtx, n: usize) -> Result<f64> {
    if n > EXACT_CENTERING_MAX_N {
        return Err(Error::InvalidArgument(format!(
            "exact variance needs n <= {EXACT_CENTERING_MAX_N}"
        )));
    }
    let means = ctx.exact_stepwise_means(n);
    let mats0 = SymbolMats::build(ctx.family(), ctx.channel(), ctx.family().theta0(), 0)?;
    let mut e_s = 0.0;
    let mut e_s2 = 0.0;
    for_each_sequence(ctx.channel().n_symbols(), n, |seq| {
        let mut weight_filter = DerivFilter::start(&mats0);
        for &z in seq {
            weight_filter.step(&mats0, z);
        }
        let w = weight_filter.logp.exp();
        let raw = ctx.raw_increments(seq);
        let s: f64 = raw.iter().zip(&means).map(|(v, m)| v - m).sum();
        e_s += w * s;
        e_s2 += w * s * s;
    });
    Ok(e_s2 - e_s * e_s)
}
