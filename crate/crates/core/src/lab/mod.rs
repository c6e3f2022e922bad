//! Monte Carlo experiments on the large-sample behavior of log-likelihood
//! derivatives: law-of-large-numbers deviations, normal approximation with
//! Kolmogorov-Smirnov decay, iterated-logarithm envelopes, sub-exponential
//! tails, exact mixing profiles, and the variance-growth dichotomy.
//!
//! Every experiment is a pure function of its [`ExperimentConfig`]: the same
//! config produces bit-identical reports regardless of thread count.

pub mod chernoff;
pub mod clt;
pub mod dichotomy;
pub mod lil;
pub mod lln;
pub mod mixing;

pub use chernoff::{run_chernoff, TailPoint, TailReport};
pub use clt::{run_clt, KsPoint, KsReport};
pub use dichotomy::{variance_dichotomy, DichotomyReport, DichotomyVerdict, IncrementSource};
pub use lil::{run_lil, LilReport, LilTrajectory};
pub use lln::{run_lln, LlnPoint, LlnReport};
pub use mixing::{markov_psi, psi_mixing_profile, PsiReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{AffineFamilySpec, FamilyKind, ParamFamily};
use crate::hmm::EmissionChannel;
use crate::stats::ModelCtx;

/// Lower bound on the long-run standard deviation below which the normal
/// scalings are treated as degenerate.
pub const SIGMA_FLOOR: f64 = 0.05;

/// Serializable family description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FamilySpec {
    Flip { theta0: f64, omega: (f64, f64) },
    Tilted { c: f64, theta0: f64, omega: (f64, f64) },
    Logistic3 { theta0: f64, omega: (f64, f64) },
    Affine(AffineFamilySpec),
}

impl FamilySpec {
    pub fn build(&self) -> Result<ParamFamily> {
        match self {
            FamilySpec::Flip { theta0, omega } => {
                ParamFamily::new(FamilyKind::SymmetricFlip, *theta0, *omega)
            }
            FamilySpec::Tilted { c, theta0, omega } => {
                ParamFamily::new(FamilyKind::Tilted { c: *c }, *theta0, *omega)
            }
            FamilySpec::Logistic3 { theta0, omega } => {
                ParamFamily::new(FamilyKind::LogisticLink3, *theta0, *omega)
            }
            FamilySpec::Affine(spec) => ParamFamily::new(
                FamilyKind::Affine { a: spec.a.clone(), b: spec.b.clone() },
                spec.theta0,
                spec.omega,
            ),
        }
    }
}

fn default_alpha() -> f64 {
    0.5
}
fn default_beta() -> f64 {
    0.1
}
fn default_j_max() -> usize {
    50
}
fn default_cylinder_len() -> usize {
    3
}
fn default_trajectories() -> usize {
    32
}

/// One experiment's full specification. Identical configs (including the
/// seed) reproduce identical reports bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub family: FamilySpec,
    /// Raw channel rows, validated on build.
    pub channel: Vec<Vec<f64>>,
    /// Evaluation parameter; defaults to the family's true parameter.
    #[serde(default)]
    pub theta: Option<f64>,
    /// Derivative order (0, 1, or 2).
    #[serde(default)]
    pub order: usize,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_j_max")]
    pub j_max: usize,
    #[serde(default = "default_cylinder_len")]
    pub cylinder_len: usize,
    /// Tail thresholds for the sub-exponential tail experiment.
    #[serde(default)]
    pub x_list: Vec<f64>,
    /// Independent trajectories for the running-max experiment.
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    /// Closed-form (limit, long-run variance) override for constructions
    /// where both are known exactly (memoryless models); skips estimation.
    #[serde(default)]
    pub exact_moments: Option<(f64, f64)>,
}

impl ExperimentConfig {
    /// Minimal config with defaults for the optional knobs.
    pub fn new(family: FamilySpec, channel: Vec<Vec<f64>>, n_grid: Vec<usize>, reps: usize, seed: u64) -> Self {
        Self {
            family,
            channel,
            theta: None,
            order: 0,
            n_grid,
            reps,
            seed,
            alpha: default_alpha(),
            beta: default_beta(),
            j_max: default_j_max(),
            cylinder_len: default_cylinder_len(),
            x_list: Vec::new(),
            trajectories: default_trajectories(),
            exact_moments: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fam = self.family.build()?;
        if let Some(t) = self.theta {
            fam.check_theta(t)?;
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("n_grid must be nonempty and strictly increasing".into()));
        }
        if self.reps < 100 {
            return Err(Error::InvalidArgument(format!("reps = {} below the minimum of 100", self.reps)));
        }
        if self.trajectories == 0 {
            return Err(Error::InvalidArgument("trajectories must be positive".into()));
        }
        if self.order > crate::deriv::MAX_ORDER {
            return Err(Error::InvalidArgument(format!("order = {} exceeds 2", self.order)));
        }
        EmissionChannel::new(&self.channel)?;
        Ok(())
    }

    pub fn theta(&self) -> Result<f64> {
        Ok(match self.theta {
            Some(t) => t,
            None => self.family.build()?.theta0(),
        })
    }

    /// Builds the bound model context for this config.
    pub fn ctx(&self) -> Result<ModelCtx> {
        self.validate()?;
        let fam = self.family.build()?;
        let channel = EmissionChannel::new(&self.channel)?;
        let theta = self.theta()?;
        ModelCtx::new(fam, channel, theta, self.order)
    }
}

/// Splitmix-style deterministic sub-seed derivation, so that different
/// estimation phases of one experiment never share replica streams.
pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Long-run (limit, sigma^2) for the configured increments: the exact
/// override when present, otherwise Monte Carlo estimates. Returns
/// (l_value, sigma2, sigma2_stderr, source).
///
/// `l_len_cap` bounds the trajectory length of the limit estimation; the
/// running-max experiment caps it since its trajectories dwarf everything
/// else, at the cost of a small location error recorded via the source tag.
pub(crate) fn moments_for(
    cfg: &ExperimentConfig,
    ctx: &ModelCtx,
    l_len_cap: Option<usize>,
) -> Result<(f64, f64, f64, String)> {
    if let Some((l, s2)) = cfg.exact_moments {
        return Ok((l, s2, 0.0, "exact".to_string()));
    }
    let fam = ctx.family();
    let mut n_l = 50_000.max(4 * cfg.n_grid.last().copied().unwrap_or(1000));
    if let Some(cap) = l_len_cap {
        n_l = n_l.min(cap.max(50_000));
    }
    let l_est = crate::deriv::estimate_l(
        fam,
        ctx.channel(),
        ctx.theta(),
        ctx.order(),
        n_l,
        2000,
        derive_seed(cfg.seed, 1),
    )?;
    // grow replicas until the long-run variance has small relative error
    let mut reps = 200;
    let mut ac = crate::stats::autocov(ctx, cfg.j_max, 20 * cfg.j_max.max(100), reps, derive_seed(cfg.seed, 2))?;
    while ac.sigma2_stderr > 0.02 * ac.sigma2.abs().max(1e-12) && reps < 6400 {
        reps *= 2;
        ac = crate::stats::autocov(ctx, cfg.j_max, 20 * cfg.j_max.max(100), reps, derive_seed(cfg.seed, 2))?;
    }
    Ok((l_est.value, ac.sigma2, ac.sigma2_stderr, "estimated".to_string()))
}
