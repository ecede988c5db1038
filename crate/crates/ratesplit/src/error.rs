//! Crate-wide error type.

use thiserror::Error;

/// Failure modes shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An input is degenerate (zero vector, empty matrix, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// More users than transmit antennas: zero-forcing has no null space left.
    #[error("infeasible zero-forcing: {users} users exceed {antennas} antennas")]
    InfeasibleZeroForcing { users: usize, antennas: usize },

    /// Other groups' dominant directions leave too little null space for an
    /// outer precoder of the requested rank.
    #[error("infeasible outer precoder: rank {rank} requested but only {null_dim} null-space dimensions remain of {antennas} antennas")]
    InfeasibleOuter { rank: usize, null_dim: usize, antennas: usize },

    /// A matrix is numerically rank-deficient where full rank is required.
    #[error("ill-conditioned matrix: {0}")]
    IllConditioned(String),

    /// Operand shapes do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An iterative search exhausted its evaluation budget.
    #[error("search failed: {0}")]
    SearchFailure(String),

    /// An iterative scheme violated an invariant it is supposed to guarantee.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A requested cell/grouping layout has no layered construction here.
    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),

    /// Experiment configuration rejected; the message lists every violation.
    #[error("config error:\n{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: config problems exit 2, numerical
    /// problems exit 3, everything else exits 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::UnsupportedTopology(_) => 2,
            Error::SearchFailure(_)
            | Error::NumericalFailure(_)
            | Error::IllConditioned(_)
            | Error::DegenerateInput(_)
            | Error::InfeasibleZeroForcing { .. }
            | Error::InfeasibleOuter { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
