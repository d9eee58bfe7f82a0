use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Why no eigenvalue-1 direction could be extracted from a Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EigenspaceError {
    #[error("Jacobian is not symplectic (det = {det})")]
    NotSymplectic { det: f64 },
    #[error("no eigenvalue 1 (trace = {trace})")]
    NoUnitEigenvalue { trace: f64 },
    #[error("Jacobian equals the identity")]
    IdentityJacobian,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point leaves the family's domain: {0}")]
    DomainEscape(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("not a fixed point (residual {residual:e})")]
    NotFixedPoint { residual: f64 },
    #[error(transparent)]
    Eigenspace(#[from] EigenspaceError),
    #[error("rank-2 fixed point (P_eps = {p_eps:e} after translation)")]
    Rank2Detected { p_eps: f64 },
    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular fixed-point Jacobian (det {det:e})")]
    SingularJacobian { det: f64 },
    #[error("continuation seed is not a fixed point (residual {residual:e})")]
    SeedNotFixed { residual: f64 },
    #[error("point is not a cross-bifurcation ({kind})")]
    NotCross { kind: String },
    #[error("energy forbidden at section point (radicand {radicand:e})")]
    EnergyForbidden { radicand: f64 },
    #[error("orbit did not return to the section within t = {budget}")]
    NoReturn { budget: f64 },
    #[error("no potential well near y = {guess}")]
    NoWell { guess: f64 },
    #[error("turning point not found ({0})")]
    TurningPointNotFound(String),
    #[error("integrator failure: {0}")]
    Integrator(String),
    #[error("potential violates the straight-line condition: {0}")]
    NotStraightLine(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
