use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("config error on \"{key}\": {message}")]
    Config { key: String, message: String },

    #[error("library file not found: {}", .0.display())]
    LibraryNotFound(PathBuf),

    #[error("library format error at line {line}: {message}")]
    LibraryFormat { line: usize, message: String },

    #[error("input error in {}: {message}", path.display())]
    Input { path: PathBuf, message: String },

    #[error("search transport error: {0}")]
    SearchTransport(String),

    #[error("search response parse error: {0}")]
    SearchParse(String),

    #[error("generator client error: {0}")]
    Client(String),

    #[error("generation format error: {0}")]
    GenerationFormat(String),

    #[error("query expansion produced no usable queries")]
    ExpansionEmpty,

    #[error("no library coverage for page: {reason}")]
    NoCoverage {
        reason: String,
        expanded: Vec<String>,
    },

    #[error("library build failed: every seed query was skipped ({} skipped)", skipped.len())]
    BuildFailed { skipped: Vec<(String, String)> },

    #[error("embedding provider error: {0}")]
    Embedding(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Whether the operation may succeed if attempted again.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::SearchTransport(_) | Error::Client(_))
    }

    /// Stable machine-readable code, one per error kind.
    pub fn code(&self) -> ErrorCode {
        match self {
            Error::InvalidArgument(_) => ErrorCode::InvalidArgument,
            Error::NotFound(_) => ErrorCode::NotFound,
            Error::Config { .. } => ErrorCode::Config,
            Error::LibraryNotFound(_) => ErrorCode::LibraryNotFound,
            Error::LibraryFormat { .. } => ErrorCode::LibraryFormat,
            Error::Input { .. } => ErrorCode::Input,
            Error::SearchTransport(_) => ErrorCode::SearchTransport,
            Error::SearchParse(_) => ErrorCode::SearchParse,
            Error::Client(_) => ErrorCode::Client,
            Error::GenerationFormat(_) => ErrorCode::GenerationFormat,
            Error::ExpansionEmpty => ErrorCode::ExpansionEmpty,
            Error::NoCoverage { .. } => ErrorCode::NoCoverage,
            Error::BuildFailed { .. } => ErrorCode::BuildFailed,
            Error::Embedding(_) => ErrorCode::Embedding,
            Error::Io(_) => ErrorCode::Io,
        }
    }
}

/// Process exit codes used by the command-line tool.
///
/// `0..=2` describe batch outcomes; everything from 10 upwards identifies a
/// single error kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    Ok = 0,
    PartialFailure = 1,
    TotalFailure = 2,
    InvalidArgument = 10,
    NotFound = 11,
    Config = 12,
    LibraryNotFound = 13,
    LibraryFormat = 14,
    Input = 15,
    SearchTransport = 16,
    SearchParse = 17,
    Client = 18,
    GenerationFormat = 19,
    ExpansionEmpty = 20,
    NoCoverage = 21,
    BuildFailed = 22,
    Embedding = 23,
    Io = 24,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Ok => "OK",
            ErrorCode::PartialFailure => "PARTIAL_FAILURE",
            ErrorCode::TotalFailure => "TOTAL_FAILURE",
            ErrorCode::InvalidArgument => "INVALID_ARGUMENT",
            ErrorCode::NotFound => "NOT_FOUND",
            ErrorCode::Config => "CONFIG",
            ErrorCode::LibraryNotFound => "LIBRARY_NOT_FOUND",
            ErrorCode::LibraryFormat => "LIBRARY_FORMAT",
            ErrorCode::Input => "INPUT",
            ErrorCode::SearchTransport => "SEARCH_TRANSPORT",
            ErrorCode::SearchParse => "SEARCH_PARSE",
            ErrorCode::Client => "CLIENT",
            ErrorCode::GenerationFormat => "GENERATION_FORMAT",
            ErrorCode::ExpansionEmpty => "EXPANSION_EMPTY",
            ErrorCode::NoCoverage => "NO_COVERAGE",
            ErrorCode::BuildFailed => "BUILD_FAILED",
            ErrorCode::Embedding => "EMBEDDING",
            ErrorCode::Io => "IO",
        }
    }

    pub fn exit_code(self) -> i32 {
        self as i32
    }
}
