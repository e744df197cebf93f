//! Config-built models over the nn building blocks, and their metrics.

mod classifier;
mod metrics;
mod span_selector;
mod tagger;

pub use classifier::{Classifier, PairClassifier};
pub use metrics::{bio_segments, Metrics};
pub use span_selector::{best_span, SpanSelector};
pub use tagger::Tagger;

use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::data::{Batch, Vocabulary};
use crate::error::Result;
use crate::nn::check_dim;
use crate::registry::{Abstraction, BuildContext, ConfigurationError, Params, RegistrationError, Registry};
use crate::tensor::{ParamStore, Scope, Tensor, Var};

/// What a forward pass produces. `loss` and `instance_losses` are present
/// only when gold labels were requested.
pub struct ForwardOutput<'t> {
    pub loss: Option<Var<'t>>,
    /// Each instance's own loss, as if it were alone in the batch.
    pub instance_losses: Vec<f64>,
    pub predictions: Predictions,
}

/// Per-instance probability structures, trimmed to true lengths.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Classes { probs: Vec<Vec<f64>> },
    Tags { probs: Vec<Vec<Vec<f64>>> },
    Spans { start: Vec<Vec<f64>>, end: Vec<Vec<f64>>, best: Vec<(usize, usize)> },
}

pub trait Model: Send + Sync {
    /// Task name of the dataset reader this model consumes.
    fn task(&self) -> &'static str;

    /// Metric used for early stopping and best-epoch selection.
    fn validation_metric(&self) -> &'static str;

    /// Output labels in id order (empty for span selection).
    fn labels(&self) -> &[String];

    fn forward<'t>(&self, scope: Scope<'t>, batch: &Batch, with_loss: bool) -> Result<ForwardOutput<'t>>;

    fn new_metrics(&self) -> Metrics;

    /// One JSON result per instance of the batch.
    fn decode(&self, predictions: &Predictions, batch: &Batch) -> Result<Vec<Value>>;
}

impl Abstraction for dyn Model {
    const NAME: &'static str = "model";
}

/// Builds the model described by `params` (normally the `model` section).
pub fn build_model(
    registry: &Registry,
    params: Params,
    vocab: &Vocabulary,
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
) -> Result<Box<dyn Model>, ConfigurationError> {
    let mut ctx = BuildContext { registry, vocab, params: store, rng };
    registry.instantiate::<dyn Model>(params, &mut ctx)
}

pub(crate) fn register_builtins(registry: &mut Registry) -> Result<(), RegistrationError> {
    registry.register::<dyn Model>("classifier", classifier::classifier)?;
    registry.register::<dyn Model>("pair_classifier", classifier::pair_classifier)?;
    registry.register::<dyn Model>("tagger", tagger::tagger)?;
    registry.register::<dyn Model>("span_selector", span_selector::span_selector)
}

pub(crate) fn labels_of(params: &Params, vocab: &Vocabulary, namespace: &str) -> Result<Vec<String>, ConfigurationError> {
    let labels: Vec<String> = vocab.tokens(namespace).into_iter().map(str::to_string).collect();
    if labels.is_empty() {
        return Err(ConfigurationError::new(params.path(), format!("vocabulary namespace '{namespace}' has no labels")));
    }
    Ok(labels)
}

pub(crate) fn expect_dim(
    params: &Params,
    consumer: &str,
    expected: Option<usize>,
    producer: &str,
    actual: usize,
) -> Result<(), ConfigurationError> {
    match expected {
        Some(e) => check_dim(
            &format!("{}.input_dim", params.key_path(consumer)),
            &params.key_path(consumer),
            e,
            &params.key_path(producer),
            actual,
        ),
        None => Ok(()),
    }
}

/// Row-wise softmax of a `[N, C]` value, keeping only the first `lens[n]`
/// columns of each row.
pub(crate) fn softmax_rows(logits: &Tensor, lens: Option<&[usize]>) -> Vec<Vec<f64>> {
    let c = logits.last_dim();
    logits
        .data()
        .chunks(c.max(1))
        .enumerate()
        .map(|(r, row)| {
            let n = lens.map_or(c, |l| l[r]);
            let max = row[..n].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row[..n].iter().map(|x| (x - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / z).collect()
        })
        .collect()
}

/// Index of the first maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn metadata_tokens(batch: &Batch, key: &str) -> Vec<Value> {
    match batch.metadata("metadata") {
        Ok(values) => values.iter().map(|m| m.get(key).cloned().unwrap_or(Value::Null)).collect(),
        Err(_) => vec![Value::Null; batch.size],
    }
}
