use nalgebra::DMatrix;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("partition has {labels} labels but matrix has {columns} columns")]
    PartitionMismatch { labels: usize, columns: usize },

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("projection did not converge after {sweeps} sweeps (worst relative violation {worst_violation:.3e})")]
    ProjectionDidNotConverge { sweeps: usize, worst_violation: f64 },

    #[error("matrix is rank deficient (sigma_min = {sigma_min:.3e}, sigma_max = {sigma_max:.3e})")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },

    #[error("assumption violated: {assumption}: {detail}")]
    AssumptionViolated { assumption: String, detail: String },

    #[error("training diverged at outer step {step}")]
    Diverged {
        step: usize,
        last_encoder: Box<DMatrix<f64>>,
        last_decoder: Box<DMatrix<f64>>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        field: Option<String>,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.into(),
            found: found.into(),
        }
    }

    pub(crate) fn parse(path: &std::path::Path, line: u64, field: Option<&str>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            line,
            field: field.map(str::to_owned),
            message: message.into(),
        }
    }
}
