use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario file not found: {0}")]
    ScenarioNotFound(PathBuf),

    #[error("failed to parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("no feasible circular initial trajectory: {0}")]
    NoCircularInit(String),

    #[error("zero speed at slot {slot}; the fixed-wing power model is singular at rest")]
    ZeroSpeed { slot: usize },

    #[error("window index {k} out of range 1..={windows}")]
    WindowOutOfRange { k: usize, windows: usize },

    #[error("{block} block infeasible{}", window.map(|k| format!(" in window {k}")).unwrap_or_default())]
    Infeasible {
        block: &'static str,
        window: Option<usize>,
    },

    #[error("solver failure in {block} block: {status}")]
    Solver { block: &'static str, status: String },

    #[error("csv error in {path}: {reason}")]
    Csv { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Stable machine-readable tag, used by the CLI error JSON.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ScenarioNotFound(_) => "scenario_not_found",
            Error::Parse { .. } => "parse_error",
            Error::Invalid { .. } => "invalid_parameter",
            Error::Dimension(_) => "dimension_mismatch",
            Error::NoCircularInit(_) => "no_circular_init",
            Error::ZeroSpeed { .. } => "zero_speed",
            Error::WindowOutOfRange { .. } => "window_out_of_range",
            Error::Infeasible { .. } => "infeasible",
            Error::Solver { .. } => "solver_failure",
            Error::Csv { .. } => "csv_error",
            Error::Io(_) => "io_error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
