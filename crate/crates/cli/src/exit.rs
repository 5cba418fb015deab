//! Exit statuses and the error type every command returns.

use std::fmt;

pub const OK: u8 = 0;
/// Bad arguments or configuration, and any failure not covered below.
pub const CONFIG: u8 = 1;
pub const IO: u8 = 2;
/// A checkpoint or vocabulary dump is corrupt or does not match.
pub const INTEGRITY: u8 = 3;
/// Tweets, parses and labels do not line up.
pub const ALIGNMENT: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(CONFIG, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(IO, message)
    }

    pub fn integrity(message: impl Into<String>) -> Self {
        Self::new(INTEGRITY, message)
    }

    pub fn alignment(message: impl Into<String>) -> Self {
        Self::new(ALIGNMENT, message)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<sylstm::Error> for Failure {
    fn from(e: sylstm::Error) -> Self {
        use sylstm::Error as E;
        let code = match &e {
            E::Io { .. }
            | E::Resource { .. }
            | E::Malformed { .. }
            | E::Parse { .. }
            | E::Json(_) => IO,
            E::Checkpoint(_) => INTEGRITY,
            E::Alignment(_) => ALIGNMENT,
            _ => CONFIG,
        };
        Self::new(code, e.to_string())
    }
}

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::io(format!("{}: {e}", path.display()))
}
