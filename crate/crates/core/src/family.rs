//! Scalar-parameter kernel families: built-in analytic families, JSON-defined
//! affine families, and stationary-vector derivatives.
//!
//! All families expose the kernel together with its entrywise first and
//! second derivatives in the parameter. Derivative callbacks are analytic,
//! not numeric; finite differences appear only in tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{check_primitive, stationary_unchecked, StationaryVector, StochasticMatrix};

const GRID_VALIDATION_POINTS: usize = 25;

/// Fixed mixing endpoints for the three-state logistic family.
const LOGISTIC_A: [[f64; 3]; 3] = [
    [0.60, 0.20, 0.20],
    [0.25, 0.50, 0.25],
    [0.20, 0.30, 0.50],
];
const LOGISTIC_B: [[f64; 3]; 3] = [
    [0.20, 0.50, 0.30],
    [0.40, 0.20, 0.40],
    [0.35, 0.45, 0.20],
];

/// Which built-in (or user-supplied affine) family a [`ParamFamily`] wraps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FamilyKind {
    /// Two states, kernel [[1-t, t], [t, 1-t]].
    SymmetricFlip,
    /// Two states, kernel [[1-t, t], [c, 1-c]] with fixed second row.
    Tilted { c: f64 },
    /// Three states, kernel (1-s(t)) A + s(t) B with s the logistic map.
    LogisticLink3,
    /// Kernel A + t B with stochastic A and zero-row-sum B.
    Affine { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
}

/// JSON form of an affine family definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineFamilySpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub omega: (f64, f64),
    pub theta0: f64,
}

/// An analytically parameterized kernel family over an open interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFamily {
    kind: FamilyKind,
    theta0: f64,
    omega: (f64, f64),
    n_states: usize,
}

impl ParamFamily {
    /// Builds and validates a family: `theta0` must lie inside `omega`, the
    /// kernel must validate and be primitive on a 25-point grid over
    /// `omega`, and first-derivative rows must sum to zero.
    pub fn new(kind: FamilyKind, theta0: f64, omega: (f64, f64)) -> Result<Self> {
        if !(omega.0 < omega.1) {
            return Err(Error::InvalidArgument(format!(
                "omega must be a nonempty open interval, got ({}, {})",
                omega.0, omega.1
            )));
        }
        let n_states = match &kind {
            FamilyKind::SymmetricFlip | FamilyKind::Tilted { .. } => 2,
            FamilyKind::LogisticLink3 => 3,
            FamilyKind::Affine { a, .. } => a.len(),
        };
        let fam = Self { kind, theta0, omega, n_states };
        if !fam.contains(theta0) {
            return Err(Error::ParamOutOfRange { theta: theta0, lo: omega.0, hi: omega.1 });
        }
        for k in 0..GRID_VALIDATION_POINTS {
            let t = omega.0
                + (omega.1 - omega.0) * (k as f64 + 0.5) / GRID_VALIDATION_POINTS as f64;
            let kernel = fam.kernel_at(t)?;
            check_primitive(&kernel)?;
            let d1 = fam.kernel_d1_at(t);
            for i in 0..n_states {
                let row_sum: f64 = d1[i * n_states..(i + 1) * n_states].iter().sum();
                if row_sum.abs() > 1e-10 {
                    return Err(Error::InvalidArgument(format!(
                        "derivative row {i} sums to {row_sum} at theta={t}"
                    )));
                }
            }
        }
        Ok(fam)
    }

    /// Builds an affine family from its JSON definition.
    pub fn from_affine_json(json: &str) -> Result<Self> {
        let spec: AffineFamilySpec = serde_json::from_str(json)
            .map_err(|e| Error::InvalidArgument(format!("affine family JSON: {e}")))?;
        let n = spec.a.len();
        if spec.b.len() != n || spec.a.iter().any(|r| r.len() != n) || spec.b.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("A and B must be square with equal size".into()));
        }
        Self::new(FamilyKind::Affine { a: spec.a, b: spec.b }, spec.theta0, spec.omega)
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn omega(&self) -> (f64, f64) {
        self.omega
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta > self.omega.0 && theta < self.omega.1
    }

    pub(crate) fn check_theta(&self, theta: f64) -> Result<()> {
        if !self.contains(theta) {
            return Err(Error::ParamOutOfRange { theta, lo: self.omega.0, hi: self.omega.1 });
        }
        Ok(())
    }

    /// Kernel at `theta`, validated.
    pub fn kernel_at(&self, theta: f64) -> Result<StochasticMatrix> {
        self.check_theta(theta)?;
        let rows = self.raw_rows(theta);
        StochasticMatrix::new(&rows)
    }

    fn raw_rows(&self, t: f64) -> Vec<Vec<f64>> {
        match &self.kind {
            FamilyKind::SymmetricFlip => vec![vec![1.0 - t, t], vec![t, 1.0 - t]],
            FamilyKind::Tilted { c } => vec![vec![1.0 - t, t], vec![*c, 1.0 - *c]],
            FamilyKind::LogisticLink3 => {
                let s = logistic(t);
                (0..3)
                    .map(|i| {
                        (0..3)
                            .map(|j| (1.0 - s) * LOGISTIC_A[i][j] + s * LOGISTIC_B[i][j])
                            .collect()
                    })
                    .collect()
            }
            FamilyKind::Affine { a, b } => a
                .iter()
                .zip(b)
                .map(|(ra, rb)| ra.iter().zip(rb).map(|(&x, &y)| x + t * y).collect())
                .collect(),
        }
    }

    /// Entrywise first derivative of the kernel, flat row-major.
    pub fn kernel_d1_at(&self, t: f64) -> Vec<f64> {
        let n = self.n_states;
        match &self.kind {
            FamilyKind::SymmetricFlip => vec![-1.0, 1.0, 1.0, -1.0],
            FamilyKind::Tilted { .. } => vec![-1.0, 1.0, 0.0, 0.0],
            FamilyKind::LogisticLink3 => {
                let s = logistic(t);
                let ds = s * (1.0 - s);
                let mut out = vec![0.0; n * n];
                for i in 0..3 {
                    for j in 0..3 {
                        out[i * 3 + j] = ds * (LOGISTIC_B[i][j] - LOGISTIC_A[i][j]);
                    }
                }
                out
            }
            FamilyKind::Affine { b, .. } => {
                let mut out = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] = b[i][j];
                    }
                }
                out
            }
        }
    }

    /// Entrywise second derivative of the kernel, flat row-major.
    pub fn kernel_d2_at(&self, t: f64) -> Vec<f64> {
        let n = self.n_states;
        match &self.kind {
            FamilyKind::SymmetricFlip | FamilyKind::Tilted { .. } | FamilyKind::Affine { .. } => {
                vec![0.0; n * n]
            }
            FamilyKind::LogisticLink3 => {
                let s = logistic(t);
                let d2s = s * (1.0 - s) * (1.0 - 2.0 * s);
                let mut out = vec![0.0; n * n];
                for i in 0..3 {
                    for j in 0..3 {
                        out[i * 3 + j] = d2s * (LOGISTIC_B[i][j] - LOGISTIC_A[i][j]);
                    }
                }
                out
            }
        }
    }

    /// Stationary vector and its first two derivatives in the parameter.
    ///
    /// Differentiating pi(t) Delta(t) = pi(t) under sum(pi) = 1 gives two
    /// bordered linear systems sharing the stationary solve's matrix:
    /// pi'  solves x (Delta - I) = -pi  Delta',  sum(x) = 0,
    /// pi'' solves x (Delta - I) = -2 pi' Delta' - pi Delta'', sum(x) = 0.
    pub fn pi_and_derivs(&self, theta: f64) -> Result<(StationaryVector, Vec<f64>, Vec<f64>)> {
        let kernel = self.kernel_at(theta)?;
        check_primitive(&kernel)?;
        let pi = stationary_unchecked(&kernel);
        let n = self.n_states;
        let d1 = self.kernel_d1_at(theta);
        let d2 = self.kernel_d2_at(theta);

        let mut a = kernel.to_dmatrix().transpose() - DMatrix::identity(n, n);
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let lu = a.lu();

        let rhs1 = bordered_rhs(&d1, pi.probs(), None, n);
        let pi1 = lu.solve(&rhs1).expect("bordered system is nonsingular");
        let pi1: Vec<f64> = pi1.iter().copied().collect();

        let rhs2 = bordered_rhs(&d2, pi.probs(), Some((&d1, &pi1)), n);
        let pi2 = lu.solve(&rhs2).expect("bordered system is nonsingular");
        let pi2: Vec<f64> = pi2.iter().copied().collect();

        Ok((pi, pi1, pi2))
    }
}

/// Right-hand side of the bordered stationary-derivative system, transposed
/// to column form with the last entry replaced by the sum constraint (0).
fn bordered_rhs(dk: &[f64], pi: &[f64], first_order: Option<(&[f64], &[f64])>, n: usize) -> DVector<f64> {
    let mut rhs = DVector::zeros(n);
    for j in 0..n {
        let mut v = 0.0;
        for i in 0..n {
            v -= pi[i] * dk[i * n + j];
        }
        if let Some((d1, pi1)) = first_order {
            for i in 0..n {
                v -= 2.0 * pi1[i] * d1[i * n + j];
            }
        }
        rhs[j] = v;
    }
    rhs[n - 1] = 0.0;
    rhs
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}
