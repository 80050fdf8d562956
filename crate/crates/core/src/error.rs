//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by corpus loading, metric computation, transforms, the toy
/// model, and the inference client.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// One or more corpus lines failed validation. Each entry is a 1-based
    /// line number and the reason.
    #[error("corpus schema violation: {}", format_line_errors(.0))]
    Schema(Vec<(usize, String)>),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("question id not covered: {0}")]
    UnknownQuestion(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("out-of-vocabulary symbol: {0:?}")]
    OutOfVocab(String),

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("endpoint auth failure: {0}")]
    Auth(String),

    #[error("endpoint request failed after retries: {0}")]
    Endpoint(String),

    #[error("malformed endpoint reply: {0}")]
    MalformedReply(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_line_errors(errors: &[(usize, String)]) -> String {
    let shown: Vec<String> = errors
        .iter()
        .take(5)
        .map(|(line, msg)| format!("line {line}: {msg}"))
        .collect();
    let mut out = shown.join("; ");
    if errors.len() > 5 {
        out.push_str(&format!(" (+{} more)", errors.len() - 5));
    }
    out
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by bad user input (files, flags, schemas) as
    /// opposed to runtime/internal failures. The CLI maps these to distinct
    /// exit codes.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Schema(_)
                | Error::InvalidInput(_)
                | Error::UnknownQuestion(_)
                | Error::EmptyInput(_)
        )
    }
}
