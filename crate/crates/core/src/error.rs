use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value of {field} at {point:?}")]
    Evaluation {
        field: &'static str,
        point: Vec<f64>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "eigensolver did not converge after {iterations} iterations (best residuals {residuals:?})"
    )]
    SolverNotConverged {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("ground state is degenerate: lambda1 - lambda0 = {gap:e}")]
    DegenerateGroundState { gap: f64 },

    #[error("spectrum is not discrete on this box: eigenvalues moved by {drift:e} when the box grew from {radius} to {enlarged_radius}")]
    NotConfining {
        radius: f64,
        enlarged_radius: f64,
        drift: f64,
    },

    #[error("path weight overflow: |integral of K| reached {max_integral}")]
    WeightOverflow { max_integral: f64 },

    #[error("total path weight underflowed at t = {t}; use a shorter horizon or more paths")]
    WeightUnderflow { t: f64 },

    #[error("rate evaluation failed at {position:?}: {reason}")]
    Rate { position: Vec<f64>, reason: String },

    #[error("eigenvector store failed validation: {0}")]
    Store(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
