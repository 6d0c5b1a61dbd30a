//! Error type shared by every module of the toolkit.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the filtering toolkit.
///
/// Variants are split between *model validation* problems (bad dimensions,
/// arguments outside their domain) and *numerical* problems detected at run
/// time (singular Gram matrix, Riccati blow-up, ...). The CLI maps the former
/// to exit code 2 and the latter to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} outside the quadrature domain [0, {horizon}]")]
    QuadratureDomain { t: f64, horizon: f64 },

    #[error("Gram matrix numerically singular at t = {t} (condition {cond:.3e}): the initial condition is measurable from the noise history")]
    GramSingular { t: f64, cond: f64 },

    #[error("kernel arguments out of order: s = {s} > t = {t}")]
    DomainOrder { t: f64, s: f64 },

    #[error("residual covariance of the initial condition has eigenvalue {min_eig:.3e} < 0")]
    ResidualCovNotPSD { min_eig: f64 },

    #[error("Riccati solution norm {norm:.3e} exceeded the blow-up cap at t = {t}")]
    RiccatiBlowup { t: f64, norm: f64 },

    #[error("covariance lost positive semidefiniteness at t = {t} (min eigenvalue {min_eig:.3e})")]
    PsdViolation { t: f64, min_eig: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("conditioning covariance is numerically singular")]
    SingularConditioning,

    #[error("(a, h) is not detectable; the algebraic Riccati equation may have no stabilizing solution")]
    NotDetectable,

    #[error("(a, b) is not stabilizable; the algebraic Riccati equation may have no stabilizing solution")]
    NotStabilizable,

    #[error("Riccati integration did not reach a fixed point within t = {horizon}")]
    NoConvergence { horizon: f64 },

    #[error("closed-loop spectral margin {value:.3e} is not positive")]
    NonPositiveMargin { value: f64 },

    #[error("decay-fit window holds only {points} grid points (need at least {min})")]
    WindowTooShort { points: usize, min: usize },

    #[error("covariance difference below the resolvable floor across the fit window; rate unidentifiable (converged)")]
    DifferenceBelowFloor,

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },

    #[error("all particle weights underflowed; model and data are inconsistent")]
    AllWeightsZero,

    #[error("baseline mean-square error underflowed; the error ratio is undefined")]
    DivisionByZero,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown {kind} '{name}'; known names: {known}")]
    UnknownName {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("failed to parse expression '{expr}': {reason}")]
    ExprParse { expr: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Classify the error for process exit codes: `2` for model/config
    /// validation problems, `3` for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::QuadratureDomain { .. }
            | Error::DomainOrder { .. }
            | Error::GridMismatch(_)
            | Error::DimensionMismatch(_)
            | Error::InvalidConfig(_)
            | Error::UnknownName { .. }
            | Error::ExprParse { .. }
            | Error::Io { .. }
            | Error::Serde(_) => 2,
            _ => 3,
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Double-precision margins used by the numerical checks.
///
/// The values are conventional for 64-bit floating point; no model-specific
/// calibration is applied.
pub mod tol {
    /// Below this a matrix entry (or norm) counts as exactly zero.
    pub const ZERO: f64 = 1e-12;
    /// Allowed residual for algebraic identities solved directly.
    pub const RESIDUAL: f64 = 1e-8;
    /// Condition-number cap before the Gram matrix counts as singular.
    pub const COND_MAX: f64 = 1e12;
    /// Allowed negative eigenvalue on nominally PSD matrices.
    pub const PSD: f64 = 1e-10;
    /// Frobenius-norm cap before a Riccati solution counts as blown up.
    pub const BLOWUP_CAP: f64 = 1e12;
    /// Allowed residual of the algebraic Riccati equation.
    pub const ARE: f64 = 1e-8;
    /// Allowed deviation between the reduced and high-dimensional
    /// Volterra filters before a discrepancy is reported.
    pub const XCHECK: f64 = 1e-3;
}
