//! Shared numeric helpers: normal CDF, Kolmogorov-Smirnov distance, least
//! squares on a line, sample quantiles, and bootstrap percentile bands.

use rand::Rng;
use statrs::function::beta::beta_reg;

/// Standard normal CDF via the complementary error function (libm's erfc is
/// accurate to about one ulp, which keeps the relative error of the CDF
/// below 1e-12 across |x| <= 8).
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sided Kolmogorov-Smirnov distance between the empirical law of
/// `samples` and the standard normal. Sorts a copy of the input.
pub fn ks_distance_std_normal(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in s.iter().enumerate() {
        let f = std_normal_cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Ordinary least squares for `y = intercept + slope * x`.
/// Panics if fewer than two points are supplied.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert!(x.len() == y.len() && x.len() >= 2, "need >= 2 points");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (denominator n-1).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn stderr_of_mean(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// Standard error of the sample variance, using the fourth central moment
/// (valid without normality).
pub fn stderr_of_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let var_of_var = (m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n;
    var_of_var.max(0.0).sqrt()
}

/// Linear-interpolation sample quantile, `q` in [0, 1]. Sorts a copy.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let h = q * (s.len() as f64 - 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        s[lo]
    } else {
        s[lo] + (h - lo as f64) * (s[hi] - s[lo])
    }
}

/// A point estimate with a bootstrap percentile band.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct FitWithBand {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

/// 2.5%/97.5% percentile band from bootstrap replicates of a statistic.
/// `stat` receives a resampling RNG per replicate and returns the statistic.
pub fn bootstrap_band<F>(estimate: f64, resamples: usize, rng: &mut impl Rng, mut stat: F) -> FitWithBand
where
    F: FnMut(&mut dyn rand::RngCore) -> f64,
{
    let mut reps: Vec<f64> = (0..resamples).map(|_| stat(rng)).collect();
    reps.retain(|v| v.is_finite());
    if reps.len() < 10 {
        return FitWithBand { estimate, lo: f64::NEG_INFINITY, hi: f64::INFINITY };
    }
    FitWithBand {
        estimate,
        lo: quantile(&reps, 0.025),
        hi: quantile(&reps, 0.975),
    }
}

/// Draws a bootstrap resample (with replacement) of `xs` into `out`.
pub fn resample_into(xs: &[f64], out: &mut Vec<f64>, rng: &mut dyn rand::RngCore) {
    out.clear();
    for _ in 0..xs.len() {
        out.push(xs[rng.gen_range(0..xs.len())]);
    }
}

/// One-sided Clopper-Pearson upper confidence bound for a binomial
/// proportion with `successes` out of `trials` at level `1 - alpha`.
///
/// The bound is the `1 - alpha` quantile of Beta(successes + 1,
/// trials - successes), computed by bisection on the regularized
/// incomplete beta function.
pub fn clopper_pearson_upper(successes: usize, trials: usize, alpha: f64) -> f64 {
    assert!(trials > 0);
    if successes >= trials {
        return 1.0;
    }
    let a = successes as f64 + 1.0;
    let b = (trials - successes) as f64;
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
