//! # textlab
//!
//! Declarative NLP experiments. An experiment is a commented-JSON document;
//! every `type` entry in it is resolved through a [`registry::Registry`] into a
//! concrete component (token embedders, sequence encoders, span extractors,
//! models, optimizers, dataset readers). Training runs on a small define-by-run
//! reverse-mode autodiff engine over 64-bit floats, fed by a field-based data
//! pipeline that takes care of bucketing, padding and masking.
//!
//! The crate is organized bottom-up:
//!
//! * [`config`]: the configuration dialect (parse, merge overrides, canonical form)
//! * [`registry`]: `Params` consumption and string-to-component factories
//! * [`data`]: tokens, fields, instances, vocabularies, batches
//! * [`tensor`]: tensors, the differentiation tape, parameter storage
//! * [`nn`]: token embedders, seq2seq / seq2vec encoders, span extractors
//! * [`models`]: classifier, tagger, span selector, pair classifier, metrics
//! * [`training`]: optimizers, the trainer loop, evaluation
//! * [`archive`]: weight files and packed model archives
//! * [`predictor`] / [`service`] / [`cli`]: running trained models
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod archive;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod models;
pub mod nn;
pub mod predictor;
pub mod registry;
pub mod service;
pub mod tensor;
pub mod toy;
pub mod training;

pub use config::{ConfigValue, ParseError};
pub use error::{Error, Result};
pub use registry::{ConfigurationError, Params, Registry};
