use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input could not be parsed at all.
    #[error("parse error in {source_name}: {message}")]
    Parse { source_name: String, message: String },

    /// Input parsed but violates an invariant. `field` names the offending item.
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("non-finite input to {0}")]
    NonFinite(&'static str),

    /// Overlapping bumpers in one lane. Always a logic or integration bug.
    #[error("collision at t={time:.2}s in lane {lane}: vehicle {follower} overlaps vehicle {leader}")]
    Collision {
        time: f64,
        lane: usize,
        follower: u64,
        leader: u64,
    },

    /// A vehicle drove past the end of its lane.
    #[error("vehicle {vehicle} overran the end of its lane at t={time:.2}s")]
    LaneOverrun { time: f64, vehicle: u64 },

    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("no overlapping valid cells for {0}")]
    EmptyOverlap(&'static str),

    #[error("optimizer: {0}")]
    Optimizer(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a runtime fault.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation { .. }
                | Error::NonFinite(_)
                | Error::Geometry(_)
                | Error::EmptyOverlap(_)
        )
    }
}
