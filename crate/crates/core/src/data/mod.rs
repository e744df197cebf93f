//! Examples as [`Instance`]s of typed [`Field`]s, plus everything needed to
//! turn them into padded, masked model inputs.

mod batch;
mod fields;
pub mod readers;
mod vocab;

pub use batch::{
    bucket_indices, index_instance, make_buckets, pad_batch, sequential_batches, Batch, FieldArray, IndexedField, IndexedInstance,
    TagArray, TextArray,
};
pub use fields::{tokenize, Field, IndexField, Instance, LabelField, SequenceLabelField, TextField, Token, Tokenizer};
pub use readers::DatasetReader;
pub use vocab::{Vocabulary, CHARACTERS, PADDING_TOKEN, TOKENS, UNKNOWN_TOKEN};

use crate::registry::{RegistrationError, Registry};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("tokens must be non-empty")]
    EmptyToken,
    #[error("field '{0}' appears twice in one instance")]
    DuplicateField(String),
    #[error("field '{field}' refers to '{target}', which is not a text field of this instance")]
    UnresolvedReference { field: String, target: String },
    #[error("field '{field}' has {found} entries but its text field has {expected} tokens")]
    LengthMismatch { field: String, expected: usize, found: usize },
    #[error("span field '{field}' ({start}, {end}) is outside 0..{len} or has start > end")]
    SpanOutOfRange { field: String, start: usize, end: usize, len: usize },
    #[error("index field '{field}' value {index} is outside 0..{len}")]
    IndexOutOfRange { field: String, index: usize, len: usize },
    #[error("label '{label}' is not in vocabulary namespace '{namespace}'")]
    UnknownLabel { namespace: String, label: String },
    #[error("batch schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("missing field `{field}`")]
    MissingField { field: String },
    #[error("field `{field}` must be {expected}")]
    InvalidField { field: String, expected: String },
    #[error("cannot build a batch from zero instances")]
    EmptyBatch,
    #[error("batch size must be at least 1")]
    InvalidBatchSize,
    #[error("'{0}' is not a text field")]
    NotATextField(String),
    #[error("{path}:{line}: {message}")]
    Json { path: String, line: usize, message: String },
    #[error("could not read '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("vocabulary: {0}")]
    Vocabulary(String),
}

impl DataError {
    /// The input field an error is about, when there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            DataError::DuplicateField(field) | DataError::NotATextField(field) => Some(field),
            DataError::UnresolvedReference { field, .. }
            | DataError::LengthMismatch { field, .. }
            | DataError::SpanOutOfRange { field, .. }
            | DataError::IndexOutOfRange { field, .. }
            | DataError::MissingField { field }
            | DataError::InvalidField { field, .. } => Some(field),
            _ => None,
        }
    }
}

pub(crate) fn register_builtins(registry: &mut Registry) -> Result<(), RegistrationError> {
    readers::register(registry)
}
