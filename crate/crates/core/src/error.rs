use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("`{0}` is not a DOI")]
    InvalidDoi(String),

    #[error("request to {url} failed after {attempts} attempt(s): {message}")]
    Network {
        url: String,
        attempts: u32,
        message: String,
    },

    #[error("HTTP {status} from {url}: {body}")]
    HttpStatus { url: String, status: u16, body: String },

    #[error("offline mode forbids network access ({0})")]
    Offline(String),

    #[error("checksum mismatch for {path}: recorded sha256 {recorded}, downloaded sha256 {downloaded}")]
    ChecksumMismatch {
        path: PathBuf,
        recorded: String,
        downloaded: String,
    },

    #[error("unsupported archive format for `{name}` (supported: zip, tar, tar.gz)")]
    UnsupportedArchive { name: String },

    #[error("archive entry `{entry}` escapes the extraction root; package {doi} quarantined")]
    PathEscape { doi: String, entry: String },

    #[error("archive of {doi} is {size} bytes, above the cap of {cap} bytes")]
    OverSizeCap { doi: String, size: u64, cap: u64 },

    #[error("record {0} has no archive URL")]
    MissingArchiveUrl(String),

    #[error("malformed payload: {0}")]
    Malformed(String),

    #[error("interpreter unavailable: {0}")]
    InterpreterMissing(String),

    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("IA needs at least one observation")]
    EmptyVectors,

    #[error("property `{property}` of template `{template}` takes a number, got `{value}`")]
    NonNumericLiteral {
        template: String,
        property: String,
        value: String,
    },

    #[error("{path}: schema `{found}` where `{expected}` was expected")]
    SchemaMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("missing artifact {path}; run `provex {stage}` first")]
    MissingArtifact { path: PathBuf, stage: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether retrying the same request may succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            Error::Network { .. } => true,
            Error::HttpStatus { status, .. } => *status >= 500 || *status == 429,
            _ => false,
        }
    }
}
