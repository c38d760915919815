use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("delay measure weights sum to {sum}, expected 1")]
    Mass { sum: f64 },
    #[error("delay measure support outside [-{horizon}, 0]: atom at {location}")]
    Support { location: f64, horizon: f64 },
    #[error("horizon mismatch: {expected} vs {found}")]
    HorizonMismatch { expected: f64, found: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("kernel bound violated: |{name}| = {value} exceeds declared bound {bound}")]
    BoundViolation { name: &'static str, value: f64, bound: f64 },
    #[error("resolvent tolerance {tol} unreachable within {cap} orders")]
    ToleranceUnreachable { tol: f64, cap: usize },
    #[error("effective sample size {ess:.3} below 10")]
    DegenerateWeights { ess: f64 },
    #[error("Gauss-Hermite quadrature failed: {0}")]
    Quadrature(String),
    #[error("operation not supported for {0} family")]
    UnsupportedFamily(&'static str),
    #[error("singular collocation step at node {node}: pivot {pivot:e}")]
    SingularStep { node: usize, pivot: f64 },
    #[error("Picard iteration diverged at iteration {iteration} (sup {sup:e})")]
    PicardDiverged { iteration: usize, sup: f64 },
    #[error("Picard iteration stalled after {iterations} iterations (last diff {last_diff:e})")]
    PicardStalled { iterations: usize, last_diff: f64 },
    #[error("regression ill-conditioned: condition number {0:e}")]
    RegressionIllConditioned(f64),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Process exit code: 2 for invalid input, 3 for convergence or truncation
    /// failures, 4 for degenerate importance weights, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ToleranceUnreachable { .. }
            | Error::SingularStep { .. }
            | Error::PicardDiverged { .. }
            | Error::PicardStalled { .. }
            | Error::RegressionIllConditioned(_) => 3,
            Error::DegenerateWeights { .. } => 4,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
