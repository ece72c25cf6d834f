use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not skew-symmetric (|m + m^T|_F = {0:e})")]
    NonSkewInput(f64),
    #[error("matrix is not symmetric (|m - m^T|_F = {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not a rotation: {0}")]
    InvalidRotation(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("gravity source collision: |x + R rho| = {0:e}")]
    CollisionSingularity(f64),
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("momentum map is numerically singular (condition number {0:e})")]
    SingularMassMatrix(f64),
    #[error("step {step} failed: {source}")]
    StepFailed { step: usize, source: Box<Error> },
    #[error("analytic linearization disagrees with finite differences (relative error {0:e})")]
    LinearizationMismatch(f64),
    #[error("sensitivity system is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("cubic spline needs at least two knots, got {0}")]
    TooFewKnots(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Coarse failure class, mapped to process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Model,
    Solver,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Model => 3,
            Category::Solver => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Model => "model",
            Category::Solver => "solver",
        }
    }
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::Config(_) | Error::Io(_) => Category::Config,
            Error::NonSkewInput(_)
            | Error::NotSymmetric(_)
            | Error::InvalidRotation(_)
            | Error::NotPositiveDefinite(_)
            | Error::CollisionSingularity(_)
            | Error::SingularMassMatrix(_)
            | Error::InvalidInput(_)
            | Error::TooFewKnots(_) => Category::Model,
            Error::NoConvergence { .. }
            | Error::LinearizationMismatch(_)
            | Error::IllConditioned(_) => Category::Solver,
            Error::StepFailed { source, .. } => source.category(),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Error {
        Error::StepFailed {
            step,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
