//! Running an archived model on raw task-schema JSON.

use std::path::Path;

use serde_json::{json, Map, Value};

use crate::archive::{LoadedModel, ModelArchive};
use crate::data::{index_instance, pad_batch, DataError};
use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::tensor::{Scope, Tape};

/// Wraps a loaded model. Prediction only reads the parameters, so one
/// predictor can serve many threads at once.
pub struct Predictor {
    loaded: LoadedModel,
}

impl Predictor {
    pub fn new(loaded: LoadedModel) -> Self {
        Predictor { loaded }
    }

    pub fn from_archive(path: &Path) -> Result<Self> {
        Ok(Self::new(ModelArchive::read(path)?.load_model()?))
    }

    pub fn from_archive_with(path: &Path, registry: &Registry) -> Result<Self> {
        Ok(Self::new(ModelArchive::read(path)?.load_model_with(registry)?))
    }

    pub fn loaded(&self) -> &LoadedModel {
        &self.loaded
    }

    /// Predicts one request object. Malformed input yields
    /// [`Error::Data`] naming the offending field.
    pub fn predict_json(&self, input: &Value) -> Result<Value> {
        let LoadedModel { reader, model, store, vocab, .. } = &self.loaded;
        let instance = reader.text_to_instance(input, false)?;
        let batch = pad_batch(&[index_instance(&instance, vocab)?])?;
        let tape = Tape::new();
        let out = model.forward(Scope::new(&tape, store), &batch, false)?;
        let mut decoded = model.decode(&out.predictions, &batch)?;
        decoded.pop().ok_or(Error::Data(DataError::EmptyBatch))
    }

    /// Model type, task schema, labels, vocabulary sizes and the exact
    /// configuration text the model was trained with.
    pub fn info(&self) -> Value {
        let LoadedModel { reader, model, vocab, config, model_type, .. } = &self.loaded;
        let sizes: Map<String, Value> = vocab.namespaces().map(|ns| (ns.to_string(), json!(vocab.size(ns)))).collect();
        json!({
            "model_type": model_type,
            "task_schema": reader.schema(),
            "labels": model.labels(),
            "vocab_sizes": sizes,
            "config": config,
        })
    }
}
