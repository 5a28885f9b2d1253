use thiserror::Error;

use crate::token::Location;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at {location}")]
pub struct ParseError {
    pub message: String,
    pub location: Location,
}

impl ParseError {
    pub fn at(message: impl Into<String>, location: Location) -> Self {
        Self {
            message: message.into(),
            location,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranspileError {
    #[error("failed to parse source query: {0}")]
    Parse(#[from] ParseError),
    /// A construct with no target-dialect mapping. `construct` names it verbatim.
    #[error("unsupported construct {construct} at {location}")]
    Unsupported { construct: String, location: Location },
}
