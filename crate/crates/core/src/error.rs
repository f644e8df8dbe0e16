use std::path::PathBuf;

/// Coarse error classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Solver,
    Simulation,
    Io,
    Contract,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Solver => 4,
            ErrorCategory::Simulation => 5,
            ErrorCategory::Io => 6,
            ErrorCategory::Contract => 7,
        }
    }
}

#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("rank-deficient library matrix, offending columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },
    #[error("constraint error: {0}")]
    Constraint(String),
    #[error("simulation diverged at step {step}")]
    SimulationDiverged { step: u64 },
    #[error("adaptation diverged at step {step}")]
    AdaptationDiverged { step: u64 },
    #[error("dimension mismatch: {0}")]
    Contract(String),
    #[error("model load error: {0}")]
    ModelLoad(String),
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::Domain(_) | Error::Data(_) | Error::ModelLoad(_) | Error::Csv(_) => {
                ErrorCategory::Data
            }
            Error::Solver(_) | Error::RankDeficient { .. } | Error::Constraint(_) => {
                ErrorCategory::Solver
            }
            Error::SimulationDiverged { .. } | Error::AdaptationDiverged { .. } => {
                ErrorCategory::Simulation
            }
            Error::Contract(_) => ErrorCategory::Contract,
            Error::Io(_) => ErrorCategory::Io,
            Error::InFile { source, .. } => source.category(),
        }
    }

    /// Attach a file path to an error without losing its category.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Error {
        Error::InFile {
            path: path.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
