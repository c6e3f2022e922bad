//! The observed process of a hidden Markov chain: per-symbol kernel slices,
//! exact small-n sequence probabilities, normalized log-space forward
//! filtering, simulation, and the conditional forgetting-gap measurement.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{stream_rng, StreamKind};
use crate::markov::{sample_index, stationary, StationaryVector, StochasticMatrix};
use crate::numeric::linear_fit;

/// Memoryless observation channel: entry (state, symbol) = p(symbol | state).
/// Every entry must be strictly positive; rows are renormalized on
/// validation like kernel rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionChannel {
    n_states: usize,
    n_symbols: usize,
    emit: Vec<f64>, // row-major, n_states * n_symbols
}

impl EmissionChannel {
    pub fn new(raw: &[Vec<f64>]) -> Result<Self> {
        let n_states = raw.len();
        if n_states == 0 {
            return Err(Error::DimensionMismatch("channel has no rows".into()));
        }
        let n_symbols = raw[0].len();
        if n_symbols == 0 {
            return Err(Error::DimensionMismatch("channel has no columns".into()));
        }
        let mut emit = Vec::with_capacity(n_states * n_symbols);
        for (i, row) in raw.iter().enumerate() {
            if row.len() != n_symbols {
                return Err(Error::DimensionMismatch(format!(
                    "channel row {i} has {} entries, expected {n_symbols}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::ZeroChannelEntry { row: i, col: j });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::NonStochastic { row: i, sum });
            }
            emit.extend(row.iter().map(|&v| v / sum));
        }
        Ok(Self { n_states, n_symbols, emit })
    }

    /// Identity channel smoothed toward uniform: p(z|j) = 1 - eps + eps/n
    /// on the diagonal and eps/n off it.
    pub fn identity_smoothed(n: usize, eps: f64) -> Self {
        assert!(eps > 0.0 && eps < 1.0);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|z| if z == i { 1.0 - eps + eps / n as f64 } else { eps / n as f64 })
                    .collect()
            })
            .collect();
        Self::new(&rows).expect("smoothed identity rows are valid")
    }

    /// Binary symmetric channel with crossover probability `eps`.
    pub fn binary_symmetric(eps: f64) -> Self {
        Self::new(&[vec![1.0 - eps, eps], vec![eps, 1.0 - eps]]).expect("valid BSC rows")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    #[inline]
    pub fn prob(&self, state: usize, symbol: usize) -> f64 {
        self.emit[state * self.n_symbols + symbol]
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[f64] {
        &self.emit[state * self.n_symbols..(state + 1) * self.n_symbols]
    }
}

/// A hidden Markov chain: kernel, channel, stationary law, and the
/// per-symbol matrices `sym[z](i, j) = kernel(i, j) * p(z | j)` whose
/// products give exact sequence probabilities.
#[derive(Debug, Clone)]
pub struct HmmSpec {
    kernel: StochasticMatrix,
    channel: EmissionChannel,
    pi: StationaryVector,
    symbol_mats: Vec<Vec<f64>>, // one flat row-major n x n matrix per symbol
}

impl HmmSpec {
    /// Composes a primitive kernel with a strictly positive channel.
    pub fn build(kernel: StochasticMatrix, channel: EmissionChannel) -> Result<Self> {
        if channel.n_states() != kernel.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "kernel has {} states, channel has {}",
                kernel.n_states(),
                channel.n_states()
            )));
        }
        let pi = stationary(&kernel)?;
        let n = kernel.n_states();
        let symbol_mats: Vec<Vec<f64>> = (0..channel.n_symbols())
            .map(|z| {
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        m[i * n + j] = kernel.entry(i, j) * channel.prob(j, z);
                    }
                }
                m
            })
            .collect();
        // The slices must add back to the kernel entrywise.
        for i in 0..n {
            for j in 0..n {
                let total: f64 = symbol_mats.iter().map(|m| m[i * n + j]).sum();
                debug_assert!((total - kernel.entry(i, j)).abs() <= 1e-12);
            }
        }
        Ok(Self { kernel, channel, pi, symbol_mats })
    }

    pub fn kernel(&self) -> &StochasticMatrix {
        &self.kernel
    }

    pub fn channel(&self) -> &EmissionChannel {
        &self.channel
    }

    pub fn pi(&self) -> &StationaryVector {
        &self.pi
    }

    pub fn n_states(&self) -> usize {
        self.kernel.n_states()
    }

    pub fn n_symbols(&self) -> usize {
        self.channel.n_symbols()
    }

    /// Flat row-major matrix for one symbol.
    #[inline]
    pub fn symbol_matrix(&self, z: usize) -> &[f64] {
        &self.symbol_mats[z]
    }

    /// Analytic envelope for one-step conditional probabilities: the min and
    /// max over (state, symbol) of the symbol-matrix row sums. Every
    /// conditional p(z | past) lies within [min, max] for its symbol.
    pub fn cond_prob_bounds(&self) -> (f64, f64) {
        let n = self.n_states();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for m in &self.symbol_mats {
            for i in 0..n {
                let s: f64 = m[i * n..(i + 1) * n].iter().sum();
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
        (lo, hi)
    }

    fn check_symbol(&self, z: usize) -> Result<()> {
        if z >= self.n_symbols() {
            return Err(Error::SymbolOutOfRange { symbol: z, alphabet: self.n_symbols() });
        }
        Ok(())
    }
}

/// Normalized forward filter state after `t` symbols. `log_scale` carries
/// the accumulated log-probability of the prefix in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardFilter {
    pub probs: Vec<f64>,
    pub log_scale: f64,
    pub t: usize,
}

impl ForwardFilter {
    /// Filter at time zero: the stationary state law, nothing observed.
    pub fn start(h: &HmmSpec) -> Self {
        Self { probs: h.pi().probs().to_vec(), log_scale: 0.0, t: 0 }
    }

    /// Restarts from an arbitrary state law (used by truncated-window
    /// functionals).
    pub fn start_from(probs: Vec<f64>) -> Self {
        Self { probs, log_scale: 0.0, t: 0 }
    }
}

/// One filter update. Returns the advanced filter and the conditional
/// probability p(z_t | z_1^{t-1}).
pub fn forward_step(f: &ForwardFilter, h: &HmmSpec, z: usize) -> Result<(ForwardFilter, f64)> {
    h.check_symbol(z)?;
    let n = h.n_states();
    let m = h.symbol_matrix(z);
    let mut next = vec![0.0; n];
    for i in 0..n {
        let vi = f.probs[i];
        if vi != 0.0 {
            for j in 0..n {
                next[j] += vi * m[i * n + j];
            }
        }
    }
    let cond: f64 = next.iter().sum();
    for v in &mut next {
        *v /= cond;
    }
    Ok((
        ForwardFilter { probs: next, log_scale: f.log_scale + cond.ln(), t: f.t + 1 },
        cond,
    ))
}

/// Log-probability of a symbol sequence under the stationary law,
/// accumulated in log space through the normalized filter.
pub fn log_sequence_prob(h: &HmmSpec, z_seq: &[usize]) -> Result<f64> {
    assert!(!z_seq.is_empty(), "sequence must be nonempty");
    let mut f = ForwardFilter::start(h);
    for &z in z_seq {
        let (next, _) = forward_step(&f, h, z)?;
        f = next;
    }
    Ok(f.log_scale)
}

/// Probability of a symbol sequence, exp of [`log_sequence_prob`].
pub fn exact_sequence_prob(h: &HmmSpec, z_seq: &[usize]) -> Result<f64> {
    Ok(log_sequence_prob(h, z_seq)?.exp())
}

/// Simulates `length` steps of the stationary chain and its observations.
/// Returns (state path, symbol path).
pub fn simulate_hmm(h: &HmmSpec, length: usize, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    assert!(length >= 1);
    let mut states = Vec::with_capacity(length);
    let mut symbols = Vec::with_capacity(length);
    let mut state = sample_index(h.pi().probs(), rng);
    states.push(state);
    symbols.push(sample_index(h.channel().row(state), rng));
    for _ in 1..length {
        state = sample_index(h.kernel().row(state), rng);
        states.push(state);
        symbols.push(sample_index(h.channel().row(state), rng));
    }
    (states, symbols)
}

/// Visits every symbol sequence of the given length over `alphabet`
/// symbols, in lexicographic order.
pub fn for_each_sequence(alphabet: usize, len: usize, mut visit: impl FnMut(&[usize])) {
    let mut seq = vec![0usize; len];
    loop {
        visit(&seq);
        let mut pos = len;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            seq[pos] += 1;
            if seq[pos] < alphabet {
                break;
            }
            seq[pos] = 0;
        }
    }
}

/// Measured forgetting of the conditional law: gap sizes per history-window
/// length and the fitted geometric decay.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapFit {
    /// Window lengths at which the gap was measured.
    pub windows: Vec<usize>,
    /// Max over sampled history pairs and next symbols of the absolute
    /// difference of log conditional probabilities.
    pub gaps: Vec<f64>,
    /// Fitted constant in gap ~ c * rho^window (log-space least squares).
    pub c: f64,
    /// Fitted geometric rate.
    pub rho: f64,
    /// Set when every measured gap was below 1e-14; `c` and `rho` are then
    /// meaningless and reported as 0.
    pub degenerate: bool,
}

pub const GAP_FLOOR: f64 = 1e-14;
/// History pairs sampled per window in gap measurements.
pub const GAP_SAMPLES: usize = 200;
/// Extra history length beyond the agreement window.
pub const GAP_HISTORY_PAD: usize = 30;

/// Max over `samples` history pairs (agreeing on the trailing `window`
/// symbols) and over next symbols of |log p(z|h1) - log p(z|h2)|.
pub fn conditional_gap_at_window(h: &HmmSpec, window: usize, samples: usize, seed: u64) -> Result<f64> {
    assert!(window >= 1);
    let len = window + GAP_HISTORY_PAD;
    let mut worst = 0.0f64;
    for s in 0..samples {
        let mut rng = stream_rng(seed, StreamKind::HistoryPair, ((window as u64) << 32) | s as u64);
        let (_, h1) = simulate_hmm(h, len, &mut rng);
        let (_, mut h2) = simulate_hmm(h, len, &mut rng);
        h2[len - window..].copy_from_slice(&h1[len - window..]);
        let f1 = run_filter(h, &h1)?;
        let f2 = run_filter(h, &h2)?;
        for z in 0..h.n_symbols() {
            let c1 = one_step_cond(h, &f1, z);
            let c2 = one_step_cond(h, &f2, z);
            worst = worst.max((c1.ln() - c2.ln()).abs());
        }
    }
    Ok(worst)
}

fn run_filter(h: &HmmSpec, seq: &[usize]) -> Result<ForwardFilter> {
    let mut f = ForwardFilter::start(h);
    for &z in seq {
        let (next, _) = forward_step(&f, h, z)?;
        f = next;
    }
    Ok(f)
}

#[inline]
fn one_step_cond(h: &HmmSpec, f: &ForwardFilter, z: usize) -> f64 {
    let n = h.n_states();
    let m = h.symbol_matrix(z);
    let mut acc = 0.0;
    for i in 0..n {
        let vi = f.probs[i];
        for j in 0..n {
            acc += vi * m[i * n + j];
        }
    }
    acc
}

/// Measures the conditional gap at windows 1..=max_window and fits
/// log gap = log c + window * log rho over the non-degenerate windows.
pub fn conditional_tail_gap(h: &HmmSpec, max_window: usize, samples: usize, seed: u64) -> Result<GapFit> {
    let windows: Vec<usize> = (1..=max_window).collect();
    let mut gaps = Vec::with_capacity(windows.len());
    for &w in &windows {
        gaps.push(conditional_gap_at_window(h, w, samples, seed)?);
    }
    Ok(fit_gap_decay(windows, gaps))
}

pub(crate) fn fit_gap_decay(windows: Vec<usize>, gaps: Vec<f64>) -> GapFit {
    let usable: Vec<(f64, f64)> = windows
        .iter()
        .zip(&gaps)
        .filter(|(_, &g)| g > GAP_FLOOR)
        .map(|(&w, &g)| (w as f64, g.ln()))
        .collect();
    if usable.len() < 2 {
        return GapFit { windows, gaps, c: 0.0, rho: 0.0, degenerate: true };
    }
    let xs: Vec<f64> = usable.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.1).collect();
    let (intercept, slope) = linear_fit(&xs, &ys);
    GapFit { windows, gaps, c: intercept.exp(), rho: slope.exp(), degenerate: false }
}
