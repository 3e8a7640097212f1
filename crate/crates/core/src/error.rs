use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("design matrix is rank deficient (column {column})")]
    RankDeficient { column: usize },

    #[error("degenerate fit: residual sum of squares is zero, log-likelihood is unbounded")]
    DegenerateFit,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("leaf {leaf} of covariate {covariate} contains no observations")]
    EmptyLeaf { covariate: usize, leaf: usize },

    #[error("no admissible split")]
    NoAdmissibleSplit,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("(p={p}, n={n}, s={s}) is not on the reference grid")]
    OffGrid { p: usize, n: usize, s: usize },

    #[error("no degrees of freedom available for s={s}")]
    MissingDof { s: usize },

    #[error("covariate {0} has non-positive values and shifting is disabled")]
    NonPositiveValues(usize),

    #[error("selection did not converge after {0} cycles")]
    NoConvergence(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numbers rather than the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::DegenerateFit
                | Error::NoAdmissibleSplit
                | Error::NoConvergence(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
