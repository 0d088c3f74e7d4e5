use thiserror::Error;

/// Errors produced by scenario construction, the designers and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// An input violates a structural contract (shape, Hermitian symmetry, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("channel generation failed: {0}")]
    ChannelGeneration(String),

    /// The conic program has no feasible point.
    #[error("design is infeasible: {0}")]
    InfeasibleDesign(String),

    #[error("rank-1 reconstruction failed: {0}")]
    Reconstruction(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e}, trace {trace:.3e})")]
    NotPsd { min_eig: f64, trace: f64 },

    #[error("degenerate zero-forcing power for user {user}: rho = {rho:.3e}")]
    DegenerateRho { user: usize, rho: f64 },

    /// The solver stopped without an optimality or infeasibility certificate.
    #[error("solver failure: {0}")]
    Solver(String),

    #[error("sweep failed: {0}")]
    Sweep(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
