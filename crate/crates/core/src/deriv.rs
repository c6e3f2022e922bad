//! Exact first and second parameter-derivatives of the log-likelihood via a
//! derivative-propagating forward recursion.
//!
//! The filter carries the normalized state posterior `w` together with its
//! first and second parameter-derivatives `a` and `b`. Writing `N = w M_z`,
//! `N' = a M_z + w M'_z`, `N'' = b M_z + 2 a M'_z + w M''_z` and
//! `c = sum(N)`, the per-symbol increments of the log-likelihood and its
//! derivatives are
//!
//! ```text
//! d0 = ln c,   d1 = c'/c,   d2 = c''/c - (c'/c)^2,
//! ```
//!
//! and the filter advances by the quotient rule:
//!
//! ```text
//! w <- N/c,   a <- (N' - w c')/c,   b <- (N'' - 2 a c' - w c'')/c.
//! ```
//!
//! Everything stays O(1) per entry per step, so per-step increments come out
//! cancellation-free even over millions of symbols. The recursion starts at
//! the stationary vector of the kernel and its derivatives, since the
//! likelihood of a prefix is taken under the stationary law at the
//! evaluated parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{replica_map, stream_rng, StreamKind};
use crate::family::ParamFamily;
use crate::hmm::{simulate_hmm, EmissionChannel, GapFit, HmmSpec};
use crate::numeric::{mean, stderr_of_mean};

/// Highest derivative order the engine propagates.
pub const MAX_ORDER: usize = 2;

/// Per-symbol matrices of the kernel family at a fixed parameter: the
/// kernel slice and its first two entrywise derivatives, per symbol.
#[derive(Debug, Clone)]
pub struct SymbolMats {
    n: usize,
    n_symbols: usize,
    order: usize,
    m0: Vec<Vec<f64>>,
    m1: Vec<Vec<f64>>,
    m2: Vec<Vec<f64>>,
    pi: Vec<f64>,
    pi1: Vec<f64>,
    pi2: Vec<f64>,
}

impl SymbolMats {
    /// Assembles the per-symbol matrices for `fam` at `theta`, propagating
    /// derivatives up to `order` (0, 1, or 2).
    pub fn build(fam: &ParamFamily, channel: &EmissionChannel, theta: f64, order: usize) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::InvalidArgument(format!("order {order} > {MAX_ORDER}")));
        }
        let kernel = fam.kernel_at(theta)?;
        if channel.n_states() != kernel.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "kernel has {} states, channel has {}",
                kernel.n_states(),
                channel.n_states()
            )));
        }
        let (pi, pi1, pi2) = fam.pi_and_derivs(theta)?;
        let n = kernel.n_states();
        let k1 = fam.kernel_d1_at(theta);
        let k2 = fam.kernel_d2_at(theta);
        let slice = |src: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
            (0..channel.n_symbols())
                .map(|z| {
                    let mut m = vec![0.0; n * n];
                    for i in 0..n {
                        for j in 0..n {
                            m[i * n + j] = src(i, j) * channel.prob(j, z);
                        }
                    }
                    m
                })
                .collect()
        };
        Ok(Self {
            n,
            n_symbols: channel.n_symbols(),
            order,
            m0: slice(&|i, j| kernel.entry(i, j)),
            m1: if order >= 1 { slice(&|i, j| k1[i * n + j]) } else { Vec::new() },
            m2: if order >= 2 { slice(&|i, j| k2[i * n + j]) } else { Vec::new() },
            pi: pi.probs().to_vec(),
            pi1,
            pi2,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

/// Per-symbol increments of the log-likelihood value and derivatives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepIncrements {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
}

impl StepIncrements {
    pub fn order(&self, l: usize) -> f64 {
        match l {
            0 => self.d0,
            1 => self.d1,
            _ => self.d2,
        }
    }
}

/// Forward recursion state: normalized posterior and its derivatives, plus
/// the accumulated log-likelihood value and derivatives.
#[derive(Debug, Clone)]
pub struct DerivFilter {
    w: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    nw: Vec<f64>,
    na: Vec<f64>,
    nb: Vec<f64>,
    pub logp: f64,
    pub d1_logp: f64,
    pub d2_logp: f64,
    pub t: usize,
    order: usize,
}

impl DerivFilter {
    /// Filter at time zero: stationary vector and its derivatives.
    pub fn start(mats: &SymbolMats) -> Self {
        let n = mats.n;
        Self {
            w: mats.pi.clone(),
            a: if mats.order >= 1 { mats.pi1.clone() } else { vec![0.0; n] },
            b: if mats.order >= 2 { mats.pi2.clone() } else { vec![0.0; n] },
            nw: vec![0.0; n],
            na: vec![0.0; n],
            nb: vec![0.0; n],
            logp: 0.0,
            d1_logp: 0.0,
            d2_logp: 0.0,
            t: 0,
            order: mats.order,
        }
    }

    /// Restarts the posterior at the stationary law with zeroed accumulators,
    /// as if nothing had been observed. Used by restricted-window
    /// functionals.
    pub fn reset(&mut self, mats: &SymbolMats) {
        self.w.copy_from_slice(&mats.pi);
        if self.order >= 1 {
            self.a.copy_from_slice(&mats.pi1);
        }
        if self.order >= 2 {
            self.b.copy_from_slice(&mats.pi2);
        }
        self.logp = 0.0;
        self.d1_logp = 0.0;
        self.d2_logp = 0.0;
        self.t = 0;
    }

    /// Normalized posterior over states.
    pub fn posterior(&self) -> &[f64] {
        &self.w
    }

    /// Advances one symbol and returns the per-symbol increments.
    pub fn step(&mut self, mats: &SymbolMats, z: usize) -> StepIncrements {
        let n = mats.n;
        let m0 = &mats.m0[z];
        // N = w M
        for j in 0..n {
            self.nw[j] = 0.0;
        }
        for i in 0..n {
            let wi = self.w[i];
            if wi != 0.0 {
                let row = &m0[i * n..(i + 1) * n];
                for j in 0..n {
                    self.nw[j] += wi * row[j];
                }
            }
        }
        let c: f64 = self.nw.iter().sum();
        let inv_c = 1.0 / c;
        let mut inc = StepIncrements { d0: c.ln(), d1: 0.0, d2: 0.0 };

        let mut dc = 0.0;
        if self.order >= 1 {
            let m1 = &mats.m1[z];
            for j in 0..n {
                self.na[j] = 0.0;
            }
            for i in 0..n {
                let ai = self.a[i];
                let wi = self.w[i];
                let r0 = &m0[i * n..(i + 1) * n];
                let r1 = &m1[i * n..(i + 1) * n];
                for j in 0..n {
                    self.na[j] += ai * r0[j] + wi * r1[j];
                }
            }
            dc = self.na.iter().sum();
            inc.d1 = dc * inv_c;
        }

        let mut d2c = 0.0;
        if self.order >= 2 {
            let m1 = &mats.m1[z];
            let m2 = &mats.m2[z];
            for j in 0..n {
                self.nb[j] = 0.0;
            }
            for i in 0..n {
                let bi = self.b[i];
                let ai = self.a[i];
                let wi = self.w[i];
                let r0 = &m0[i * n..(i + 1) * n];
                let r1 = &m1[i * n..(i + 1) * n];
                let r2 = &m2[i * n..(i + 1) * n];
                for j in 0..n {
                    self.nb[j] += bi * r0[j] + 2.0 * ai * r1[j] + wi * r2[j];
                }
            }
            d2c = self.nb.iter().sum();
            inc.d2 = d2c * inv_c - inc.d1 * inc.d1;
        }

        // advance the posterior and its derivatives by the quotient rule
        for j in 0..n {
            self.w[j] = self.nw[j] * inv_c;
        }
        if self.order >= 1 {
            let ratio = dc * inv_c;
            for j in 0..n {
                self.a[j] = self.na[j] * inv_c - self.w[j] * ratio;
            }
        }
        if self.order >= 2 {
            let r1 = dc * inv_c;
            let r2 = d2c * inv_c;
            for j in 0..n {
                self.b[j] = self.nb[j] * inv_c - 2.0 * self.a[j] * r1 - self.w[j] * r2;
            }
        }

        self.logp += inc.d0;
        self.d1_logp += inc.d1;
        self.d2_logp += inc.d2;
        self.t += 1;
        inc
    }
}

/// Log-likelihood of a sequence with derivatives up to the requested order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogLikDerivs {
    pub n: usize,
    /// log p(z_1^n) in nats.
    pub value: f64,
    /// d/dtheta log p.
    pub d1: f64,
    /// d^2/dtheta^2 log p.
    pub d2: f64,
    /// Per-symbol increments, populated on request.
    pub per_step: Option<Vec<StepIncrements>>,
}

/// Runs the derivative-propagating recursion over `z_seq` at `theta`.
pub fn logp_derivs(
    fam: &ParamFamily,
    channel: &EmissionChannel,
    theta: f64,
    z_seq: &[usize],
    order: usize,
    want_per_step: bool,
) -> Result<LogLikDerivs> {
    if z_seq.is_empty() {
        return Err(Error::InvalidArgument("empty symbol sequence".into()));
    }
    let mats = SymbolMats::build(fam, channel, theta, order)?;
    if let Some(&bad) = z_seq.iter().find(|&&z| z >= mats.n_symbols()) {
        return Err(Error::SymbolOutOfRange { symbol: bad, alphabet: mats.n_symbols() });
    }
    let mut filter = DerivFilter::start(&mats);
    let mut per_step = want_per_step.then(|| Vec::with_capacity(z_seq.len()));
    for &z in z_seq {
        let inc = filter.step(&mats, z);
        if let Some(v) = per_step.as_mut() {
            v.push(inc);
        }
    }
    Ok(LogLikDerivs {
        n: z_seq.len(),
        value: filter.logp,
        d1: filter.d1_logp,
        d2: filter.d2_logp,
        per_step,
    })
}

/// Monte Carlo estimate of the per-symbol limit of a log-likelihood
/// derivative.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub reps: usize,
    pub order: usize,
    pub theta: f64,
}

/// Per-replica values of D^l log p^theta(Z_1^n) / n with Z simulated at the
/// family's true parameter. Replica `r` draws from stream `(Replica, r)`.
pub fn normalized_loglik_values(
    fam: &ParamFamily,
    channel: &EmissionChannel,
    theta: f64,
    order: usize,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let data_model = model_at_theta0(fam, channel)?;
    let mats = SymbolMats::build(fam, channel, theta, order)?;
    Ok(replica_map(reps, |r| {
        let mut rng = stream_rng(seed, StreamKind::Replica, r as u64);
        let (_, symbols) = simulate_hmm(&data_model, n, &mut rng);
        let mut filter = DerivFilter::start(&mats);
        for &z in &symbols {
            filter.step(&mats, z);
        }
        match order {
            0 => filter.logp / n as f64,
            1 => filter.d1_logp / n as f64,
            _ => filter.d2_logp / n as f64,
        }
    }))
}

/// Estimates lim E[D^l log p^theta(Z_1^n)] / n by averaging over `reps`
/// independent trajectories of length `n` simulated at the family's true
/// parameter.
pub fn estimate_l(
    fam: &ParamFamily,
    channel: &EmissionChannel,
    theta: f64,
    order: usize,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<LEstimate> {
    if n < 100 {
        return Err(Error::InvalidArgument(format!("n = {n} too short; need n >= 100")));
    }
    if reps < 2 {
        return Err(Error::InvalidArgument("need at least 2 replicas".into()));
    }
    let values = normalized_loglik_values(fam, channel, theta, order, n, reps, seed)?;
    Ok(LEstimate {
        value: mean(&values),
        stderr: stderr_of_mean(&values),
        n,
        reps,
        order,
        theta,
    })
}

/// The observation model at the family's true parameter; trajectories for
/// every estimator are simulated from this.
pub fn model_at_theta0(fam: &ParamFamily, channel: &EmissionChannel) -> Result<HmmSpec> {
    HmmSpec::build(fam.kernel_at(fam.theta0())?, channel.clone())
}

/// Builds an [`HmmSpec`] for the family at an arbitrary parameter.
pub fn model_at(fam: &ParamFamily, channel: &EmissionChannel, theta: f64) -> Result<HmmSpec> {
    HmmSpec::build(fam.kernel_at(theta)?, channel.clone())
}

/// Forgetting gap of per-symbol derivative increments: max difference of
/// the order-`l` increment for one further symbol, over sampled history
/// pairs agreeing on the trailing `window` symbols.
pub fn deriv_gap_at_window(
    fam: &ParamFamily,
    channel: &EmissionChannel,
    theta: f64,
    order: usize,
    window: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    assert!(window >= 1);
    let data_model = model_at_theta0(fam, channel)?;
    let mats = SymbolMats::build(fam, channel, theta, order)?;
    let len = window + crate::hmm::GAP_HISTORY_PAD;
    let mut worst = 0.0f64;
    let mut f1 = DerivFilter::start(&mats);
    let mut f2 = DerivFilter::start(&mats);
    for s in 0..samples {
        let mut rng = stream_rng(seed, StreamKind::HistoryPair, ((window as u64) << 32) | s as u64);
        let (_, h1) = simulate_hmm(&data_model, len, &mut rng);
        let (_, mut h2) = simulate_hmm(&data_model, len, &mut rng);
        h2[len - window..].copy_from_slice(&h1[len - window..]);
        f1.reset(&mats);
        f2.reset(&mats);
        for &z in &h1 {
            f1.step(&mats, z);
        }
        for &z in &h2 {
            f2.step(&mats, z);
        }
        for z in 0..mats.n_symbols() {
            let i1 = f1.clone().step(&mats, z);
            let i2 = f2.clone().step(&mats, z);
            worst = worst.max((i1.order(order) - i2.order(order)).abs());
        }
    }
    Ok(worst)
}

/// Measures the derivative forgetting gap on windows 1..=max_window and
/// fits the geometric decay rate.
pub fn deriv_forgetting_gap(
    fam: &ParamFamily,
    channel: &EmissionChannel,
    theta: f64,
    order: usize,
    max_window: usize,
    samples: usize,
    seed: u64,
) -> Result<GapFit> {
    let windows: Vec<usize> = (1..=max_window).collect();
    let mut gaps = Vec::with_capacity(windows.len());
    for &w in &windows {
        gaps.push(deriv_gap_at_window(fam, channel, theta, order, w, samples, seed)?);
    }
    Ok(crate::hmm::fit_gap_decay(windows, gaps))
}
