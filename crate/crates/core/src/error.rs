use thiserror::Error;

#[derive(Debug, Error)]
pub enum VpbError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("coercivity check failed: largest micro eigenvalue {largest:.3e} (spectrum head {head:?})")]
    Coercivity { largest: f64, head: Vec<f64> },
    #[error("input has a macroscopic component of size {0:.3e}; inversion of L is ill-posed")]
    NotMicroscopic(f64),
    #[error("linear solve failed: {0}")]
    Solve(String),
    #[error("iteration did not converge: {0}")]
    Convergence(String),
    #[error("outside the small-frequency regime: {0}")]
    Regime(String),
    #[error("operation not supported by the {backend} backend: {what}")]
    Backend { backend: String, what: String },
    #[error("initial data incompatible with the fluid constraints; suggested values n={n_suggested:.6e}{n_im:+.6e}i, q={q_suggested:.6e}{q_im:+.6e}i")]
    IncompatibleInitialData {
        n_suggested: f64,
        n_im: f64,
        q_suggested: f64,
        q_im: f64,
    },
    #[error("fit refused: {0}")]
    Fit(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, VpbError>;
