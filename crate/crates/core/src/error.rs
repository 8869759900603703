use std::path::Path;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}{}: {msg}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Parse { file: String, line: Option<u64>, msg: String },

    #[error("validation failed:\n{}", render_violations(.0))]
    Validation(Vec<Violation>),

    #[error("no data: {0}")]
    NoData(String),

    #[error("no candidate constraints: {0}")]
    NoCandidates(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Pipeline(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }

    /// True for errors caused by malformed inputs rather than by the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Parse { .. } | Error::Config(_))
    }
}

fn render_violations(v: &[Violation]) -> String {
    v.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n")
}
