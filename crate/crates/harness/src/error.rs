use nfbf_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl HarnessError {
    /// Process exit code: 2 config (including an unusable output directory), 3 infeasible,
    /// 4 solver failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io(_) => 2,
            HarnessError::Infeasible(_) => 3,
            HarnessError::Solver(_) => 4,
        }
    }
}

impl From<CoreError> for HarnessError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidConfig(_) | CoreError::DegenerateGeometry(_) => HarnessError::Config(e.to_string()),
            CoreError::InfeasibleUncertainty { .. } | CoreError::Infeasible { .. } => HarnessError::Infeasible(e.to_string()),
            CoreError::SolverFailure { .. } => HarnessError::Solver(e.to_string()),
        }
    }
}
