//! Query model, text grammar, HOLAP execution and the navigation operators.

mod exec;
mod grid;
mod ops;
mod parse;
mod query;

#[cfg(test)]
mod tests;

use thiserror::Error;

use crate::storage::StorageError;

pub use exec::{execute, oracle_execute, ExecOptions};
pub use grid::{pivot, Cell, Provenance, ResultGrid, Source};
pub use ops::{dice, drill_down, roll_up, slice};
pub use parse::compile_query;
pub use query::{validate_query, GroupBy, PivotSpec, Query};

#[derive(Debug, Error)]
pub enum OlapError {
    #[error("parse error at {line}:{column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{message}")]
    Semantic { name: String, message: String },
    #[error("dimension `{0}` is not grouped")]
    NotGrouped(String),
    #[error("dimension `{0}` is already at its finest level")]
    AlreadyFinest(String),
    #[error("axis mismatch: {0}")]
    AxisMismatch(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

impl OlapError {
    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        OlapError::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    pub(crate) fn semantic(name: impl Into<String>, message: impl Into<String>) -> Self {
        OlapError::Semantic {
            name: name.into(),
            message: message.into(),
        }
    }
}
