//! Reference models shared by the experiments, the CLI presets, and the
//! test suites.

use crate::family::{FamilyKind, ParamFamily};
use crate::hmm::{EmissionChannel, HmmSpec};
use crate::markov::StochasticMatrix;

/// The standing two-state example kernel.
pub fn canonical_kernel() -> StochasticMatrix {
    StochasticMatrix::new(&[vec![0.9, 0.1], vec![0.2, 0.8]]).expect("valid kernel")
}

/// Canonical kernel observed through a binary symmetric channel.
pub fn canonical_hmm() -> HmmSpec {
    HmmSpec::build(canonical_kernel(), EmissionChannel::binary_symmetric(0.1)).expect("valid model")
}

/// Tilted family whose kernel at theta0 = 0.1 is the canonical kernel.
pub fn canonical_family() -> ParamFamily {
    ParamFamily::new(FamilyKind::Tilted { c: 0.2 }, 0.1, (0.02, 0.6)).expect("valid family")
}

/// Channel used with [`canonical_family`].
pub fn canonical_channel() -> EmissionChannel {
    EmissionChannel::binary_symmetric(0.1)
}

/// Symmetric-flip family at theta0 = 0.3.
pub fn flip_family() -> ParamFamily {
    ParamFamily::new(FamilyKind::SymmetricFlip, 0.3, (0.05, 0.45)).expect("valid family")
}

/// Three-state logistic-link family.
pub fn logistic_family() -> ParamFamily {
    ParamFamily::new(FamilyKind::LogisticLink3, 0.2, (-1.5, 1.5)).expect("valid family")
}

/// Three-symbol channel paired with the logistic family.
pub fn three_symbol_channel() -> EmissionChannel {
    EmissionChannel::new(&[
        vec![0.80, 0.10, 0.10],
        vec![0.15, 0.70, 0.15],
        vec![0.10, 0.20, 0.70],
    ])
    .expect("valid channel")
}

/// Memoryless construction with a skewed marginal: every kernel row equals
/// (0.75, 0.25), observations through a lightly smoothed identity channel.
/// Output symbols are i.i.d.
pub fn iid_skewed_hmm() -> HmmSpec {
    let kernel = StochasticMatrix::new(&[vec![0.75, 0.25], vec![0.75, 0.25]]).expect("valid kernel");
    HmmSpec::build(kernel, EmissionChannel::identity_smoothed(2, 0.01)).expect("valid model")
}

/// Memoryless construction with a near-uniform marginal (0.6, 0.4); the
/// per-symbol log-probability increments have small but nonzero variance.
pub fn iid_near_uniform_hmm() -> HmmSpec {
    let kernel = StochasticMatrix::new(&[vec![0.6, 0.4], vec![0.6, 0.4]]).expect("valid kernel");
    HmmSpec::build(kernel, EmissionChannel::identity_smoothed(2, 0.01)).expect("valid model")
}

/// Marginal symbol law of a memoryless (equal-rows) model.
pub fn iid_symbol_marginal(h: &HmmSpec) -> Vec<f64> {
    let row = h.kernel().row(0);
    (0..h.n_symbols())
        .map(|z| (0..h.n_states()).map(|j| row[j] * h.channel().prob(j, z)).sum())
        .collect()
}

/// Mean and variance of the i.i.d. per-symbol log-probability increment
/// ln m(Z); the mean is minus the symbol entropy.
pub fn iid_logprob_moments(marginal: &[f64]) -> (f64, f64) {
    let mean: f64 = marginal.iter().map(|&m| m * m.ln()).sum();
    let var: f64 = marginal.iter().map(|&m| m * (m.ln() - mean) * (m.ln() - mean)).sum();
    (mean, var)
}

/// Eight fixed kernels exercising different sizes, gaps, and sparsity.
pub fn reference_kernels() -> Vec<StochasticMatrix> {
    vec![
        canonical_kernel(),
        StochasticMatrix::new(&[vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap(),
        StochasticMatrix::new(&[vec![0.55, 0.45], vec![0.45, 0.55]]).unwrap(),
        StochasticMatrix::new(&[vec![0.7, 0.3], vec![0.1, 0.9]]).unwrap(),
        StochasticMatrix::new(&[vec![0.99, 0.01], vec![0.05, 0.95]]).unwrap(),
        StochasticMatrix::new(&[
            vec![0.6, 0.2, 0.2],
            vec![0.25, 0.5, 0.25],
            vec![0.2, 0.3, 0.5],
        ])
        .unwrap(),
        StochasticMatrix::new(&[
            vec![0.0, 1.0, 0.0],
            vec![0.3, 0.0, 0.7],
            vec![0.5, 0.5, 0.0],
        ])
        .unwrap(),
        StochasticMatrix::new(&[
            vec![0.4, 0.3, 0.2, 0.1],
            vec![0.1, 0.4, 0.3, 0.2],
            vec![0.2, 0.1, 0.4, 0.3],
            vec![0.3, 0.2, 0.1, 0.4],
        ])
        .unwrap(),
    ]
}
