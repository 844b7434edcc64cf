use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("arm {arm} has {count} units, at least {required} required")]
    ArmTooSmall {
        arm: usize,
        count: usize,
        required: usize,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("support of {size} assignments exceeds the enumeration cap {cap}")]
    SupportTooLarge { size: f64, cap: f64 },

    #[error("no acceptable assignment after {draws} draws (best Mahalanobis distance {best_distance})")]
    RerandomizationExhausted { draws: u64, best_distance: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("malformed structure: {0}")]
    MalformedStructure(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Validation errors are problems with the caller's input; everything else
    /// is a runtime or feasibility failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch(_)
                | Error::InvalidInput(_)
                | Error::ArmTooSmall { .. }
                | Error::MalformedStructure(_)
                | Error::Parse(_)
        )
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
