//! Finite-state Markov kernels: validation, primitivity and spectral gap,
//! stationary distribution, and trajectory simulation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for accepting a row sum as 1 at validation time.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Stationarity residual the solved vector must meet.
pub const STATIONARY_TOL: f64 = 1e-10;

/// A validated row-stochastic transition matrix over at least two states.
///
/// Rows that pass validation are renormalized by their exact sum, so stored
/// rows sum to 1 to machine precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticMatrix {
    n_states: usize,
    rows: Vec<f64>, // row-major, n_states * n_states
}

impl StochasticMatrix {
    /// Validates a raw square matrix as a transition kernel.
    pub fn new(raw: &[Vec<f64>]) -> Result<Self> {
        let n = raw.len();
        if n < 2 {
            return Err(Error::NotSquare(format!("{n} rows")));
        }
        for (i, row) in raw.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NotSquare(format!("row {i} has {} entries, expected {n}", row.len())));
            }
        }
        let mut rows = Vec::with_capacity(n * n);
        for (i, row) in raw.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::NegativeEntry { row: i, col: j, value: v });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NonStochastic { row: i, sum });
            }
            rows.extend(row.iter().map(|&v| v / sum));
        }
        Ok(Self { n_states: n, rows })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Entry (i, j) = P(next = j | current = i).
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i * self.n_states + j]
    }

    /// Row `i` as a slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.n_states..(i + 1) * self.n_states]
    }

    /// Flat row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.rows
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_states, self.n_states, &self.rows)
    }

    /// Entropy rate of the stationary chain, -sum_i pi_i sum_j P_ij ln P_ij
    /// in nats. Zero entries contribute zero.
    pub fn entropy_rate(&self, pi: &StationaryVector) -> f64 {
        let mut h = 0.0;
        for i in 0..self.n_states {
            for j in 0..self.n_states {
                let p = self.entry(i, j);
                if p > 0.0 {
                    h -= pi.probs()[i] * p * p.ln();
                }
            }
        }
        h
    }
}

/// Stationary law of a primitive kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryVector {
    probs: Vec<f64>,
}

impl StationaryVector {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Largest componentwise violation of pi * m = pi.
    pub fn stationarity_residual(&self, m: &StochasticMatrix) -> f64 {
        let n = m.n_states();
        let mut worst = 0.0f64;
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += self.probs[i] * m.entry(i, j);
            }
            worst = worst.max((acc - self.probs[j]).abs());
        }
        worst
    }
}

/// Spectral facts about a primitive kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralInfo {
    /// Modulus of the second-largest eigenvalue; strictly below 1 for a
    /// primitive kernel.
    pub lambda2_modulus: f64,
    /// Smallest k with every entry of the k-th kernel power positive.
    pub primitivity_exponent: usize,
}

/// Checks primitivity by searching powers of the positivity pattern up to
/// the Wielandt bound (n-1)^2 + 1, and reports |lambda_2| from the full
/// eigenvalue set.
pub fn check_primitive(m: &StochasticMatrix) -> Result<SpectralInfo> {
    let n = m.n_states();
    let bound = (n - 1) * (n - 1) + 1;
    let base: Vec<bool> = m.entries().iter().map(|&v| v > 0.0).collect();
    let mut power = base.clone();
    let mut exponent = None;
    for k in 1..=bound {
        if power.iter().all(|&b| b) {
            exponent = Some(k);
            break;
        }
        power = bool_mat_mul(&power, &base, n);
    }
    let exponent = exponent.ok_or(Error::NotPrimitive { bound })?;

    let mut moduli: Vec<f64> = m
        .to_dmatrix()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .collect();
    moduli.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    Ok(SpectralInfo {
        lambda2_modulus: moduli[1],
        primitivity_exponent: exponent,
    })
}

fn bool_mat_mul(a: &[bool], b: &[bool], n: usize) -> Vec<bool> {
    let mut out = vec![false; n * n];
    for i in 0..n {
        for k in 0..n {
            if a[i * n + k] {
                for j in 0..n {
                    if b[k * n + j] {
                        out[i * n + j] = true;
                    }
                }
            }
        }
    }
    out
}

/// Solves pi * m = pi, sum(pi) = 1 by a direct linear system (one balance
/// equation replaced with the normalization row).
pub fn stationary(m: &StochasticMatrix) -> Result<StationaryVector> {
    check_primitive(m)?;
    let pi = stationary_unchecked(m);
    debug_assert!(pi.stationarity_residual(m) <= STATIONARY_TOL);
    Ok(pi)
}

/// The linear solve without the primitivity gate; used internally where the
/// kernel is already known primitive.
pub(crate) fn stationary_unchecked(m: &StochasticMatrix) -> StationaryVector {
    let n = m.n_states();
    // (Delta^T - I) pi^T = 0 with the last equation replaced by sum = 1.
    let mut a = m.to_dmatrix().transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let sol = a.lu().solve(&b).expect("primitive kernel gives a nonsingular system");
    let mut probs: Vec<f64> = sol.iter().copied().collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    StationaryVector { probs }
}

/// Power iteration from the uniform vector; independent cross-check of the
/// linear solve.
pub fn stationary_power_iteration(m: &StochasticMatrix, max_iters: usize) -> StationaryVector {
    let n = m.n_states();
    let mut x = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iters {
        for v in next.iter_mut() {
            *v = 0.0;
        }
        for i in 0..n {
            let xi = x[i];
            for j in 0..n {
                next[j] += xi * m.entry(i, j);
            }
        }
        let diff: f64 = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut x, &mut next);
        if diff < 1e-15 {
            break;
        }
    }
    StationaryVector { probs: x }
}

/// Samples an index from a probability row using one uniform draw.
#[inline]
pub(crate) fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    for (idx, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return idx;
        }
    }
    probs.len() - 1
}

/// Simulates a stationary trajectory: the first state is drawn from `pi`,
/// transitions follow the kernel rows. Same RNG state, same path.
pub fn simulate_chain(
    m: &StochasticMatrix,
    pi: &StationaryVector,
    length: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    assert!(length >= 1, "length must be >= 1");
    let mut path = Vec::with_capacity(length);
    let mut state = sample_index(pi.probs(), rng);
    path.push(state);
    for _ in 1..length {
        state = sample_index(m.row(state), rng);
        path.push(state);
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{stream_rng, StreamKind};
    use approx::assert_relative_eq;

    fn canon() -> StochasticMatrix {
        StochasticMatrix::new(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap()
    }

    #[test]
    fn validation_accepts_and_rejects() {
        assert!(canon().entries().iter().all(|&v| v >= 0.0));
        let err = StochasticMatrix::new(&[vec![0.5, 0.6], vec![0.2, 0.8]]).unwrap_err();
        assert!(matches!(err, Error::NonStochastic { row: 0, .. }));
        let err = StochasticMatrix::new(&[vec![1.5, -0.5], vec![0.2, 0.8]]).unwrap_err();
        assert!(matches!(err, Error::NegativeEntry { .. }));
        // identity is stochastic; primitivity is a separate check
        assert!(StochasticMatrix::new(&[vec![1.0, 0.0], vec![0.0, 1.0]]).is_ok());
    }

    #[test]
    fn primitivity_canonical_and_failures() {
        let info = check_primitive(&canon()).unwrap();
        assert_eq!(info.primitivity_exponent, 1);
        assert_relative_eq!(info.lambda2_modulus, 0.7, epsilon = 1e-12);

        let identity = StochasticMatrix::new(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(check_primitive(&identity), Err(Error::NotPrimitive { .. })));

        let periodic = StochasticMatrix::new(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(check_primitive(&periodic), Err(Error::NotPrimitive { .. })));

        // sparse but primitive: needs exponent > 1
        let sparse = StochasticMatrix::new(&[vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let info = check_primitive(&sparse).unwrap();
        assert!(info.primitivity_exponent > 1);
    }

    #[test]
    fn stationary_canonical_examples() {
        let pi = stationary(&canon()).unwrap();
        assert_relative_eq!(pi.probs()[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(pi.probs()[1], 1.0 / 3.0, epsilon = 1e-12);

        let uniform = StochasticMatrix::new(&[
            vec![1.0 / 3.0; 3],
            vec![1.0 / 3.0; 3],
            vec![1.0 / 3.0; 3],
        ])
        .unwrap();
        let pi = stationary(&uniform).unwrap();
        for p in pi.probs() {
            assert_relative_eq!(*p, 1.0 / 3.0, epsilon = 1e-12);
        }

        let sym = StochasticMatrix::new(&[vec![0.7, 0.3], vec![0.3, 0.7]]).unwrap();
        let pi = stationary(&sym).unwrap();
        assert_relative_eq!(pi.probs()[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn stationary_identity_propagates_not_primitive() {
        let identity = StochasticMatrix::new(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(stationary(&identity), Err(Error::NotPrimitive { .. })));
    }

    #[test]
    fn simulation_is_deterministic_per_seed() {
        let m = canon();
        let pi = stationary(&m).unwrap();
        let a = simulate_chain(&m, &pi, 200, &mut stream_rng(5, StreamKind::Replica, 0));
        let b = simulate_chain(&m, &pi, 200, &mut stream_rng(5, StreamKind::Replica, 0));
        let c = simulate_chain(&m, &pi, 200, &mut stream_rng(6, StreamKind::Replica, 0));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
