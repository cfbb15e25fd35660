use thiserror::Error;

/// Failures reported by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid manifold specification `{0}` (expected `flat:<n>` or `sphere`)")]
    BadManifold(String),
    #[error("point is not on the manifold: {0}")]
    OffManifold(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("symplectic form is singular at the given point")]
    SingularForm,
    #[error("finite-difference step {0:e} underflows")]
    StepUnderflow(f64),
    #[error("Newton iteration did not converge after {iters} steps (residual {residual:e})")]
    NewtonDiverged { iters: usize, residual: f64 },
    #[error("ODE integrator diverged")]
    IntegratorDiverged,
    #[error("focal triple: |det(I - DF)| = {det:e}")]
    FocalTriple { det: f64 },
    #[error("focal time t = {t}: |det(I + M)| = {det:e}")]
    FocalTime { t: f64, det: f64 },
    #[error("branch {0} does not exist for this model")]
    NoSuchBranch(usize),
    #[error("input outside the domain of the map: {0}")]
    OutOfDomain(String),
    #[error("membrane does not fit in a single chart")]
    MembraneTooLarge,
    #[error("quadrature did not converge: change {change:e} exceeds tolerance {tol:e}")]
    QuadratureNonConvergence { change: f64, tol: f64 },
    #[error("Hermite truncation did not converge: change {change:e} exceeds tolerance {tol:e}")]
    TruncationNonConvergence { change: f64, tol: f64 },
    #[error("polynomial degree {degree} exceeds the cap {cap}")]
    DegreeOverflow { degree: usize, cap: usize },
    #[error("symbol does not provide derivatives of order {0}")]
    MissingDerivative(usize),
    #[error("symbol has no Gaussian envelope")]
    NonDecaying,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that come from a solver or integrator failing rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NewtonDiverged { .. }
                | Error::IntegratorDiverged
                | Error::QuadratureNonConvergence { .. }
                | Error::TruncationNonConvergence { .. }
                | Error::StepUnderflow(_)
                | Error::SingularForm
        )
    }
}
