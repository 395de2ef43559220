use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("index value {0} is outside [0, 1]")]
    Domain(f64),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("over-parameterized design: {params} parameters for {n} observations")]
    OverParameterized { params: usize, n: usize },

    #[error("design matrix is singular even after ridge regularization")]
    SingularDesign,

    #[error("candidate {0} is collinear with the current model")]
    CandidateDegenerate(usize),

    #[error("no admissible candidate left to select")]
    NoCandidate,

    #[error("variance estimate {0} is not positive (exact fit reached)")]
    NumericalUnderflow(f64),

    #[error("covariate {0} is not part of the fitted model")]
    MissingCovariate(usize),

    #[error("column '{0}' not found in input header")]
    MissingColumn(String),

    #[error("cannot parse '{value}' at row {row}, column '{column}'")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("too few rows: {n} observations, at least {required} required")]
    TooFewRows { n: usize, required: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Process exit code: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::Usage(_) => 1,
            Error::Domain(_)
            | Error::Shape { .. }
            | Error::MissingColumn(_)
            | Error::Parse { .. }
            | Error::TooFewRows { .. }
            | Error::InvalidData(_)
            | Error::Empty(_)
            | Error::Io { .. }
            | Error::Csv { .. }
            | Error::Json { .. } => 2,
            Error::OverParameterized { .. }
            | Error::SingularDesign
            | Error::CandidateDegenerate(_)
            | Error::NoCandidate
            | Error::NumericalUnderflow(_)
            | Error::MissingCovariate(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
