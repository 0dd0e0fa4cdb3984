use thiserror::Error;

use crate::optimizer::OptimalSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point} outside kernel domain [{lo}, {hi}]")]
    Domain { point: f64, lo: f64, hi: f64 },

    #[error("explicit Gram matrix queried off its grid at {0}")]
    OffGrid(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive semidefinite: minimum eigenvalue {min_eig:.3e} below -{tol:.3e}")]
    NotPsd { min_eig: f64, tol: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("measure has zero total mass")]
    ZeroMass,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("factorization failed even with jitter {jitter_max:.1e}")]
    FactorizationFailed { jitter_max: f64 },

    #[error("solver did not reach the duality gap target: achieved {gap:.3e}")]
    NotConverged {
        gap: f64,
        best: Box<OptimalSolution>,
    },

    #[error("optimality certificate failed: min slack {min_slack:.3e}, max support violation {max_support_violation:.3e}")]
    CertificateFailed {
        min_slack: f64,
        max_support_violation: f64,
    },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("no sample paths satisfied the conditioning event")]
    NoSurvivors,

    #[error("at refinement level k={k}: {source}")]
    Refine {
        k: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
