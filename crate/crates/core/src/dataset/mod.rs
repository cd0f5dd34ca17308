//! Survey ingestion: schema declaration, typed loading, respondent-level
//! train/test splits and min-max normalization of continuous attributes.

mod io;
mod normalize;
mod schema;
mod split;

pub use io::{load_dataset, read_dataset, write_dataset, LoadOptions};
pub use normalize::{fit_normalizer, NumericNormalizer, ValueRange};
pub use schema::{
    canonical_mode, Attribute, AttributeGroup, AttributeKind, AttributeSchema, INVALID_LABEL,
};
pub use split::{split_train_test, TrainTestSplit, DEFAULT_N_RESPONDENTS, DEFAULT_N_TEST};

use std::collections::BTreeMap;

use thiserror::Error;

/// A typed attribute value. Ordinal and nominal values are stored as the
/// index of the level in the attribute's declared level list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Level(usize),
    Number(f64),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }
}

/// One respondent-scenario observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceInstance {
    pub id: String,
    pub respondent: String,
    pub values: BTreeMap<String, Value>,
    /// Available alternatives, in schema mode order.
    pub available_modes: Vec<String>,
    pub chosen_mode: String,
}

impl ChoiceInstance {
    pub fn value(&self, attribute: &str) -> Value {
        self.values.get(attribute).copied().unwrap_or(Value::Missing)
    }

    pub fn is_available(&self, mode: &str) -> bool {
        self.available_modes.iter().any(|m| m == mode)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("unknown column `{column}` in header")]
    UnknownColumn { column: String },
    #[error("column `{column}` declared in schema is missing from header")]
    MissingColumn { column: String },
    #[error("row {row}, column `{column}`: {reason}")]
    InvalidValue {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("row {row}, column `{column}`: chosen mode `{mode}` is not in the availability set")]
    ChoiceNotAvailable {
        row: usize,
        column: String,
        mode: String,
    },
    #[error("sizing error: {0}")]
    Sizing(String),
    #[error("cannot fit normalizer: attribute `{attribute}` has no observed value in the training pool")]
    EmptyAttribute { attribute: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
