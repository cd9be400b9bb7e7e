//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors raised by model algebra, fitting, synthesis, quantization and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("resolvent (sI - A) is numerically singular at s = {s}")]
    SingularResolvent { s: String },
    #[error("similarity transform is singular (rcond ~ {rcond:.3e})")]
    SingularTransform { rcond: f64 },
    #[error("numerator degree {num} must be less than denominator degree {den}")]
    DegreeError { num: usize, den: usize },
    #[error("pole {0} lies in the closed right half-plane")]
    UnstablePole(String),
    #[error("model is not positive real: {0}")]
    NotPr(String),
    #[error("K22 block is singular in the coordinate transform")]
    DegenerateK22,
    #[error("j*omega0 coincides with an eigenvalue of A (omega0 = {0:.6e} rad/s)")]
    ResonantEigenvalue(f64),
    #[error("canonical block structure violated: {0}")]
    StructureMismatch(String),
    #[error("recovered element is not positive: {name} = {value:.6e}")]
    NonPositiveElement { name: &'static str, value: f64 },
    #[error("resistance minimum at omega = 0 requires an inductive degenerate stage, which is not supported{0}")]
    InductiveDegenerateUnsupported(String),
    #[error("the (1,1) minor of the Hermitian part vanishes at the minimizer")]
    SingularMinor,
    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("antisymmetric part of D has support outside row/column 1")]
    NonCanonicalAntisymmetry,
    #[error("circuit contains a gyrator; this analysis only covers reciprocal circuits")]
    GyratorPresent,
    #[error("slope term E is present; Brune synthesis requires Z(inf) finite")]
    SlopeTermPresent,
    #[error("capacitance matrix is singular or not positive definite")]
    SingularCapacitance,
    #[error("matrix is not positive definite")]
    NotPd,
    #[error("transition frequency must be positive")]
    ZeroFrequency,
    #[error("port {port} has the wrong termination for this bath (expected {expected})")]
    WrongTermination { port: usize, expected: &'static str },
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("vector fit failed to converge: {0}")]
    ConvergenceFailure(String),
    #[error("least-squares system is ill conditioned (cond ~ {0:.3e})")]
    IllConditioned(f64),
    #[error("passivity enforcement failed: {0}")]
    EnforcementFailure(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("conversion is singular: I - S is not invertible")]
    SingularConversion,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
