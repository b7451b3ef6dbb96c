//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid subsystem selection: {0}")]
    InvalidSubsystem(String),

    #[error("operator is not Hermitian (max deviation {deviation:.3e}, tolerance {tolerance:.3e})")]
    NotHermitian { deviation: f64, tolerance: f64 },

    #[error("not a valid density matrix: {0}")]
    NotDensityMatrix(String),

    #[error("state vector is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("basis is not orthonormal: {0}")]
    NotOrthonormal(String),

    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("no eigenvalue within {tolerance:.3e} of {target}")]
    NoEigenvalueNear { target: f64, tolerance: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge: error estimate {achieved:.3e} above target {requested:.3e}")]
    QuadratureNonConvergence { achieved: f64, requested: f64 },

    #[error("both smearing widths are zero: the momentum integral has no ultraviolet damping")]
    UndampedUltraviolet,

    #[error("d = 1 with m = 0 is infrared divergent")]
    InfraredDivergent,

    #[error("time stepping did not converge: residual {residual:.3e} at {steps} steps")]
    StepHalvingNonConvergence { residual: f64, steps: usize },

    #[error("grid does not cover the switching supports: {0}")]
    GridTooCoarse(String),

    #[error("least-squares fit is ill-conditioned (condition number {0:.3e})")]
    FitIllConditioned(f64),

    #[error("ancilla marginal is singular; the kernel-projector form needs an invertible ancilla state")]
    SingularAncilla,

    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}
