use serde_json::{json, Value};

use super::{argmax, expect_dim, labels_of, metadata_tokens, softmax_rows, ForwardOutput, Metrics, Model, Predictions};
use crate::data::readers::CLASS_LABELS;
use crate::data::Batch;
use crate::error::Result;
use crate::nn::{Linear, Seq2VecEncoder, TokenEmbedder};
use crate::registry::{BuildContext, ConfigurationError, Params};
use crate::tensor::{Scope, Var};

/// Embedder, seq2vec encoder, then a linear layer over the labels.
pub struct Classifier {
    pub embedder: Box<dyn TokenEmbedder>,
    pub encoder: Box<dyn Seq2VecEncoder>,
    pub projection: Linear,
    pub labels: Vec<String>,
}

fn classify<'t>(logits: Var<'t>, batch: &Batch, with_loss: bool) -> Result<ForwardOutput<'t>> {
    let probs = softmax_rows(&logits.value(), None);
    let (loss, instance_losses) = if with_loss {
        let (loss, rows) = logits.masked_cross_entropy(batch.labels("label")?, None, None, true)?;
        (Some(loss), rows)
    } else {
        (None, Vec::new())
    };
    Ok(ForwardOutput { loss, instance_losses, predictions: Predictions::Classes { probs } })
}

fn decode_classes(labels: &[String], predictions: &Predictions, extra: Vec<(&str, Vec<Value>)>) -> Vec<Value> {
    let Predictions::Classes { probs } = predictions else { return Vec::new() };
    probs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let best = argmax(p);
            let mut out = json!({"label": labels[best], "label_index": best, "probabilities": p, "labels": labels});
            for (key, values) in &extra {
                out[*key] = values[i].clone();
            }
            out
        })
        .collect()
}

impl Model for Classifier {
    fn task(&self) -> &'static str {
        "classification"
    }

    fn validation_metric(&self) -> &'static str {
        "accuracy"
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn forward<'t>(&self, scope: Scope<'t>, batch: &Batch, with_loss: bool) -> Result<ForwardOutput<'t>> {
        let text = batch.text("tokens")?;
        let embedded = self.embedder.forward(scope, text)?;
        let encoded = self.encoder.forward(scope, embedded, &text.mask)?;
        classify(self.projection.forward(scope, encoded)?, batch, with_loss)
    }

    fn new_metrics(&self) -> Metrics {
        Metrics::accuracy("label")
    }

    fn decode(&self, predictions: &Predictions, batch: &Batch) -> Result<Vec<Value>> {
        Ok(decode_classes(&self.labels, predictions, vec![("tokens", metadata_tokens(batch, "tokens"))]))
    }
}

/// Shared embedder and seq2vec encoder over both sentences, combined as
/// `[u; v; |u - v|; u * v]` before a linear layer.
pub struct PairClassifier {
    pub embedder: Box<dyn TokenEmbedder>,
    pub encoder: Box<dyn Seq2VecEncoder>,
    pub projection: Linear,
    pub labels: Vec<String>,
}

impl Model for PairClassifier {
    fn task(&self) -> &'static str {
        "pair_classification"
    }

    fn validation_metric(&self) -> &'static str {
        "accuracy"
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn forward<'t>(&self, scope: Scope<'t>, batch: &Batch, with_loss: bool) -> Result<ForwardOutput<'t>> {
        let encode = |name: &str| -> Result<Var<'t>> {
            let text = batch.text(name)?;
            let embedded = self.embedder.forward(scope, text)?;
            Ok(self.encoder.forward(scope, embedded, &text.mask)?)
        };
        let (u, v) = (encode("premise")?, encode("hypothesis")?);
        let features = Var::concat_last(&[u, v, u.sub(v)?.abs(), u.mul(v)?])?;
        classify(self.projection.forward(scope, features)?, batch, with_loss)
    }

    fn new_metrics(&self) -> Metrics {
        Metrics::accuracy("label")
    }

    fn decode(&self, predictions: &Predictions, batch: &Batch) -> Result<Vec<Value>> {
        Ok(decode_classes(
            &self.labels,
            predictions,
            vec![
                ("premise_tokens", metadata_tokens(batch, "premise_tokens")),
                ("hypothesis_tokens", metadata_tokens(batch, "hypothesis_tokens")),
            ],
        ))
    }
}

type Parts = (Box<dyn TokenEmbedder>, Box<dyn Seq2VecEncoder>, usize, Vec<String>);

fn parts(params: &mut Params, ctx: &mut BuildContext<'_>) -> Result<Parts, ConfigurationError> {
    let embedder = ctx.build::<dyn TokenEmbedder>(params.pop_params("embedder")?)?;
    let encoder = ctx.build::<dyn Seq2VecEncoder>(params.pop_params("encoder")?)?;
    expect_dim(params, "encoder", encoder.input_dim(), "embedder", embedder.output_dim())?;
    let hidden = encoder.output_dim(embedder.output_dim());
    let labels = labels_of(params, ctx.vocab, CLASS_LABELS)?;
    Ok((embedder, encoder, hidden, labels))
}

pub(super) fn classifier(params: &mut Params, ctx: &mut BuildContext<'_>) -> Result<Box<dyn Model>, ConfigurationError> {
    let (embedder, encoder, hidden, labels) = parts(params, ctx)?;
    let projection = Linear::new(ctx, params, "projection", hidden, labels.len())?;
    Ok(Box::new(Classifier { embedder, encoder, projection, labels }))
}

pub(super) fn pair_classifier(params: &mut Params, ctx: &mut BuildContext<'_>) -> Result<Box<dyn Model>, ConfigurationError> {
    let (embedder, encoder, hidden, labels) = parts(params, ctx)?;
    let projection = Linear::new(ctx, params, "projection", 4 * hidden, labels.len())?;
    Ok(Box::new(PairClassifier { embedder, encoder, projection, labels }))
}
