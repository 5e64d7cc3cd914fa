use std::fmt;

/// Diagnostics attached to a failed numerical routine.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericDiagnostics {
    pub routine: &'static str,
    pub last_estimate: f64,
    pub last_change: f64,
    pub evaluations: usize,
}

impl fmt::Display for NumericDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: estimate {:e}, last change {:e} after {} evaluations",
            self.routine, self.last_estimate, self.last_change, self.evaluations
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("singular generator matrix")]
    SingularGenerator,
    #[error("empty codebook")]
    EmptyCodebook,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mechanism infeasible: {0}")]
    MechanismInfeasible(String),
    #[error("infeasible parameters: {0}")]
    InfeasibleParameters(String),
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
    #[error("numeric failure: {0}")]
    Numeric(NumericDiagnostics),
    #[error("training diverged at round {round}: loss gap {loss_gap:e}")]
    Divergence { round: usize, loss_gap: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
