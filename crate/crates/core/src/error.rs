use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid framework: {0}")]
    InvalidFramework(String),

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("framework too small: {n} nodes in {dim}-D, need at least {required}")]
    TooFewNodes { n: usize, dim: usize, required: usize },

    #[error("barrier violated: rigidity index {lambda} is not above the floor {epsilon}")]
    BarrierViolated { lambda: f64, epsilon: f64 },

    #[error("eigenvector estimate is not unit length (norm {norm})")]
    NotUnit { norm: f64 },

    #[error("consensus diverged in phase {phase} after {rounds} rounds; reduce the gains or the step")]
    ConsensusDiverged { phase: &'static str, rounds: usize },

    #[error("local block of agent {agent} is singular; the shift is too large")]
    ShiftTooLarge { agent: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no rigid initial formation found after {retries} attempts")]
    GenerationFailed { retries: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
