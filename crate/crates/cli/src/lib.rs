//! Pieces of the `pyrofocus` binary shared with its tests.

pub mod render;

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Missing(String),
    Incompatible(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Missing(_) => 3,
            Self::Incompatible(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) | Self::Missing(m) | Self::Incompatible(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for Failure {}
