use thiserror::Error;

/// Errors surfaced by model construction, derivative evaluation, and the
/// experiment operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square or is smaller than 2x2 ({0})")]
    NotSquare(String),
    #[error("row {row} sums to {sum}, off from 1 by more than 1e-9")]
    NonStochastic { row: usize, sum: f64 },
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("kernel is not primitive: no power up to {bound} is entrywise positive")]
    NotPrimitive { bound: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("channel entry ({row}, {col}) is not strictly positive")]
    ZeroChannelEntry { row: usize, col: usize },
    #[error("symbol {symbol} out of range for alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },
    #[error("parameter {theta} outside the admissible interval ({lo}, {hi})")]
    ParamOutOfRange { theta: f64, lo: f64, hi: f64 },
    #[error("long-run variance estimate {0} is negative beyond tolerance")]
    NegativeVarianceEstimate(f64),
    #[error("block exponents must satisfy 0 < beta < alpha < 1, got alpha={alpha}, beta={beta}")]
    BadExponents { alpha: f64, beta: f64 },
    #[error("series of length {n} too short for one block pair of length {pair}")]
    TooShort { n: usize, pair: usize },
    #[error("estimated sigma = {sigma} is at or below the degeneracy floor {floor}")]
    DegenerateVariance { sigma: f64, floor: f64 },
    #[error("cylinder length {len} exceeds the enumerable limit {max}")]
    CylinderTooLong { len: usize, max: usize },
    #[error("second-derivative level {l2} too close to zero (floor {floor}) for a rate experiment")]
    HessianDegenerate { l2: f64, floor: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
