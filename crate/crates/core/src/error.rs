use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LqrError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entries in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not Hurwitz (largest eigenvalue real part {margin:e})")]
    Unstable { margin: f64 },

    #[error("gain is not stabilizing (largest closed-loop eigenvalue real part {margin:e})")]
    NotStabilizing { margin: f64 },

    #[error("eigenvalue computation did not converge")]
    EigenFailure,

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("open-loop Lyapunov operator is singular; supply a shift gain K0")]
    SingularOperator,

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("rollout overflow at t = {time:e}")]
    RolloutOverflow { time: f64 },

    #[error("point outside the feasible set: {0}")]
    Infeasible(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("no convergence after {iterations} iterations (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },

    #[error("could not synthesize a stabilizing gain: {0}")]
    Synthesis(String),

    #[error("sampling starvation: {0}")]
    Sampling(String),

    #[error("gradient estimate failed in samples {samples:?}: {reason}")]
    EstimateFailure { samples: Vec<usize>, reason: String },

    #[error("perturbed gain K {sign} rU_{sample} is not stabilizing; keep r below the budget r(a)")]
    InfeasiblePerturbation { sample: usize, sign: char },

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, LqrError>;

impl From<std::io::Error> for LqrError {
    fn from(e: std::io::Error) -> Self {
        LqrError::Io(e.to_string())
    }
}
