use serde::Serialize;
use twinbeam::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_ANALYSIS: u8 = 4;

/// A failed command, printed to stderr as one JSON line.
#[derive(Debug, Serialize)]
pub struct Failure {
    pub exit_code: u8,
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl Failure {
    pub fn new(exit_code: u8, kind: &str, message: impl Into<String>) -> Self {
        Failure {
            exit_code,
            kind: kind.to_string(),
            message: message.into(),
            field: None,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Failure::new(EXIT_CONFIG, "usage", message)
    }

    /// Errors raised while reading a dataset file are I/O failures, whatever
    /// went wrong inside the file.
    pub fn dataset(e: Error) -> Self {
        let mut f = Failure::from(e);
        f.exit_code = EXIT_IO;
        f
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let exit_code = match e {
            Error::InvalidParameter { .. } | Error::Parse { .. } => EXIT_CONFIG,
            Error::Io { .. } | Error::Version { .. } | Error::Truncated { .. } | Error::Checksum { .. } => EXIT_IO,
            _ => EXIT_ANALYSIS,
        };
        let field = match &e {
            Error::InvalidParameter { field, .. } => Some(field.clone()),
            _ => None,
        };
        Failure {
            exit_code,
            kind: e.kind().to_string(),
            message: e.to_string(),
            field,
        }
    }
}

pub type CmdResult<T = ()> = std::result::Result<T, Failure>;
