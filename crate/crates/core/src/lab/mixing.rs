//! Exact mixing profile of the observed process on finite cylinders:
//! psi(n) restricted to cylinder events of bounded length, computed by
//! matrix products, with the fitted decay rate against the kernel's
//! spectral gap.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{for_each_sequence, HmmSpec};
use crate::markov::{check_primitive, StochasticMatrix};
use crate::numeric::linear_fit;

/// Cylinder lengths above this are not enumerable at desk scale.
pub const MAX_CYLINDER_LEN: usize = 4;
/// Largest alphabet the cylinder enumeration accepts.
pub const MAX_ALPHABET: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsiReport {
    pub n_grid: Vec<usize>,
    /// Cylinder-restricted psi at each separation; a lower bound for the
    /// sigma-field quantity.
    pub psi: Vec<f64>,
    /// Fitted geometric decay rate of psi.
    pub rate: f64,
    /// Modulus of the kernel's second eigenvalue.
    pub lambda2: f64,
    pub strictly_decreasing: bool,
    pub cylinder_len: usize,
}

/// Exact psi over cylinders: for past words u (length <= len) and future
/// words v (length <= len),
/// P(V | U) = filter(u) . Delta^(n-1) . slice(v) . 1 and
/// psi_hat(n) = max |P(V|U) - P(V)| / P(V).
///
/// The separation convention places the past at indices <= -n and the
/// future from 0 on, so n - 1 unobserved steps sit in between.
pub fn psi_mixing_profile(h: &HmmSpec, n_grid: &[usize], cylinder_len: usize) -> Result<PsiReport> {
    if cylinder_len > MAX_CYLINDER_LEN {
        return Err(Error::CylinderTooLong { len: cylinder_len, max: MAX_CYLINDER_LEN });
    }
    if h.n_symbols() > MAX_ALPHABET {
        return Err(Error::InvalidArgument(format!(
            "alphabet size {} exceeds the enumerable limit {MAX_ALPHABET}",
            h.n_symbols()
        )));
    }
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n_grid must be nonempty and strictly increasing".into()));
    }
    let s = h.n_states();

    // posterior state law after each past cylinder
    let mut past_filters: Vec<DMatrix<f64>> = Vec::new();
    // future slice actions on 1 and their stationary probabilities
    let mut future_cols: Vec<DMatrix<f64>> = Vec::new();
    let mut future_probs: Vec<f64> = Vec::new();

    let pi = DMatrix::from_row_slice(1, s, h.pi().probs());
    for len in 1..=cylinder_len {
        for_each_sequence(h.n_symbols(), len, |word| {
            // past: normalized pi * product of slices
            let mut row = pi.clone();
            for &z in word {
                row *= &slice_matrix(h, z);
            }
            let mass = row.sum();
            past_filters.push(row / mass);
            // future: product of slices applied to the all-ones column
            let mut col = DMatrix::from_element(s, 1, 1.0);
            for &z in word.iter().rev() {
                col = slice_matrix(h, z) * col;
            }
            let p = (pi.clone() * &col)[(0, 0)];
            future_cols.push(col);
            future_probs.push(p);
        });
    }

    let kernel = h.kernel().to_dmatrix();
    let mut psi = Vec::with_capacity(n_grid.len());
    let mut power = DMatrix::identity(s, s); // Delta^(n-1), starting at n = 1
    let mut current_exp = 0usize;
    for &n in n_grid {
        while current_exp < n - 1 {
            power = &power * &kernel;
            current_exp += 1;
        }
        let mut worst = 0.0f64;
        for filt in &past_filters {
            let propagated = filt * &power;
            for (col, &pv) in future_cols.iter().zip(&future_probs) {
                let cond = (&propagated * col)[(0, 0)];
                worst = worst.max((cond - pv).abs() / pv);
            }
        }
        psi.push(worst);
    }

    let lambda2 = check_primitive(h.kernel())?.lambda2_modulus;
    let usable: Vec<(f64, f64)> = n_grid
        .iter()
        .zip(&psi)
        .filter(|(_, &p)| p > 1e-15)
        .map(|(&n, &p)| (n as f64, p.ln()))
        .collect();
    let rate = if usable.len() >= 2 {
        let xs: Vec<f64> = usable.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = usable.iter().map(|p| p.1).collect();
        linear_fit(&xs, &ys).1.exp()
    } else {
        0.0
    };
    let strictly_decreasing = psi.windows(2).all(|w| w[1] < w[0]);
    Ok(PsiReport {
        n_grid: n_grid.to_vec(),
        psi,
        rate,
        lambda2,
        strictly_decreasing,
        cylinder_len,
    })
}

fn slice_matrix(h: &HmmSpec, z: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(h.n_states(), h.n_states(), h.symbol_matrix(z))
}

/// Direct mixing computation for the chain itself:
/// max over (u, v) of |(Delta^n)(u, v) - pi(v)| / pi(v).
pub fn markov_psi(kernel: &StochasticMatrix, pi: &[f64], n: usize) -> f64 {
    let s = kernel.n_states();
    let k = kernel.to_dmatrix();
    let mut power = DMatrix::<f64>::identity(s, s);
    for _ in 0..n {
        power = &power * &k;
    }
    let mut worst = 0.0f64;
    for u in 0..s {
        for v in 0..s {
            worst = worst.max((power[(u, v)] - pi[v]).abs() / pi[v]);
        }
    }
    worst
}
