use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {constraint}")]
    InvalidParameter { name: &'static str, constraint: String },

    #[error("shooting bracket did not resolve between U(0)={lo} and U(0)={hi}")]
    Bracket { lo: f64, hi: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{what} diverged: {detail}")]
    Divergence { what: &'static str, detail: String },

    #[error("fields belong to different grids")]
    GridMismatch,

    #[error("matrix is singular at pivot {0}")]
    Singular(usize),

    #[error("matrix is not positive definite at pivot {0}")]
    NotPositiveDefinite(usize),

    #[error("expected {expected} near-kernel eigenvalues, found {found} (spectrum {eigenvalues:?})")]
    NearKernel {
        expected: usize,
        found: usize,
        eigenvalues: Vec<f64>,
    },

    #[error("tail fit relative spread {spread:.3e} exceeds 5%")]
    TailSpread { spread: f64 },

    #[error("quadrature error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    Quadrature { estimate: f64, tolerance: f64 },

    #[error("peaks violate the separation regime: {0}")]
    Separation(String),

    #[error("config: {0}")]
    Config(String),

    #[error("check failed: {0}")]
    Assertion(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, constraint: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            constraint: constraint.into(),
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Bracket { .. } => "bracket",
            Error::NotConverged { .. } => "not_converged",
            Error::Divergence { .. } => "divergence",
            Error::GridMismatch => "grid_mismatch",
            Error::Singular(_) => "singular",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
            Error::NearKernel { .. } => "near_kernel",
            Error::TailSpread { .. } => "tail_spread",
            Error::Quadrature { .. } => "quadrature",
            Error::Separation(_) => "separation",
            Error::Config(_) => "config",
            Error::Assertion(_) => "assertion",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Process exit status: 2 for bad input, 3 for numerical failure, 4 for a failed check.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } | Error::Config(_) | Error::Separation(_) => 2,
            Error::Assertion(_) => 4,
            Error::Io(_) | Error::Json(_) => 1,
            _ => 3,
        }
    }
}
