use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("position-error radius {radius} m reaches an element (closest element at {min_distance} m)")]
    InfeasibleUncertainty { radius: f64, min_distance: f64 },
    #[error("infeasible in {stage}: {detail}")]
    Infeasible { stage: String, detail: String },
    #[error("solver failure in {stage}: {detail}")]
    SolverFailure { stage: String, detail: String },
}

impl Error {
    pub fn infeasible(stage: &str, detail: impl Into<String>) -> Self {
        Error::Infeasible { stage: stage.into(), detail: detail.into() }
    }

    pub fn solver(stage: &str, detail: impl Into<String>) -> Self {
        Error::SolverFailure { stage: stage.into(), detail: detail.into() }
    }
}

impl From<nfbf_conic::ConicError> for Error {
    fn from(e: nfbf_conic::ConicError) -> Self {
        Error::solver("conic", e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Numerical breakdowns that an SCA loop can survive by keeping its incumbent.
pub(crate) fn is_numerical(e: &Error) -> bool {
    matches!(e, Error::SolverFailure { .. })
}

/// Largest primal residual accepted from a reduced-accuracy solve. Every caller re-evaluates its
/// iterate exactly (projection, clamping, exact objective) before using it.
pub(crate) const USABLE_RESIDUAL: f64 = 1e-3;

/// Map a conic solve to `Ok` when its point is usable, or to the matching error.
pub(crate) fn check_solution(sol: &nfbf_conic::Solution, stage: &str, what: &str) -> Result<()> {
    if sol.is_usable(USABLE_RESIDUAL) {
        return Ok(());
    }
    match sol.status {
        nfbf_conic::Status::Infeasible => Err(Error::infeasible(stage, format!("{what} is infeasible"))),
        s => Err(Error::solver(
            stage,
            format!("{what} ended with {s:?} ({}, residual {:.2e})", sol.backend_status, sol.primal_residual),
        )),
    }
}
