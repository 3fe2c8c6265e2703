use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("hyperbolicity violation: eigenvalue {re:+.6e}{im:+.6e}i has |Re| below the floor {floor:e}")]
    Hyperbolicity { re: f64, im: f64, floor: f64 },

    #[error("orthogonality violation: stable/unstable coupling {coupling:e} exceeds tolerance {tolerance:e}")]
    Orthogonality { coupling: f64, tolerance: f64 },

    #[error("divergent integral: {0}")]
    DivergentIntegral(String),

    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("torus frequencies are rationally related: mode ({m1}, {m2}) annihilates k")]
    Rationality { m1: i64, m2: i64 },

    #[error("small divisor {divisor:e} at retained mode ({m1}, {m2}) is below the floor {floor:e}")]
    SmallDivisor { m1: i64, m2: i64, divisor: f64, floor: f64 },

    #[error("killing term is not periodic: endpoint mismatch {mismatch:e}")]
    NonPeriodic { mismatch: f64 },

    #[error("unknown catalog field `{0}`")]
    UnknownField(String),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("grid Péclet number {peclet:.3} exceeds the cap {cap:.3}; increase the grid size")]
    Resolution { peclet: f64, cap: f64 },

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("positivity failure: {0}")]
    Positivity(String),

    #[error("shooting failed after {iterations} iterations, last residual {residual:e}")]
    ShootingFailure { iterations: usize, residual: f64 },

    #[error("horizon T = {t} exceeds the small-time bound {bound}")]
    HorizonTooLong { t: f64, bound: f64 },

    #[error("integrator failure: {0}")]
    IntegratorFailure(String),

    #[error("quadrature did not converge: degree-doubling difference {difference:e} above {tolerance:e}")]
    Quadrature { difference: f64, tolerance: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
