use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration failed semantic validation.
    #[error("invalid configuration{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Validation { message: String, line: Option<usize> },

    /// The configuration file could not be parsed.
    #[error("malformed configuration at line {line}, column {column}: {message}")]
    Parse { message: String, line: usize, column: usize },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e} below -{tolerance:e} (max eigenvalue {max_eigenvalue:e})")]
    NotPsd { eigenvalue: f64, max_eigenvalue: f64, tolerance: f64 },

    #[error("integration diverged at step {step} of trajectory {trajectory}")]
    IntegrationDiverged { trajectory: u64, step: usize },

    #[error("{diverged} of {total} trajectories diverged (limit 0.1%)")]
    TooManyDiverged { diverged: usize, total: usize },

    #[error("directionality undefined: both peak rates are zero")]
    UndefinedDirectionality,

    #[error("intensity symbol has imaginary residual {residual:e} relative to magnitude")]
    Symbolization { residual: f64 },

    #[error("all grid points are masked")]
    EmptyResult,

    #[error("full width at half maximum undefined: no half-maximum crossing on the {side} side")]
    FwhmUndefined { side: &'static str },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("oracle integrity violated: {0}")]
    OracleIntegrity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(message: impl Into<String>) -> Self {
        Error::Validation { message: message.into(), line: None }
    }

    /// Process exit code used by the command-line tool: 2 for invalid input,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. }
            | Error::Parse { .. }
            | Error::Domain(_)
            | Error::InsufficientData(_)
            | Error::Json(_) => 2,
            Error::Io(_) => 1,
            _ => 3,
        }
    }
}
