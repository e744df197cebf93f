use serde_json::{json, Value};

use super::{argmax, expect_dim, labels_of, metadata_tokens, softmax_rows, ForwardOutput, Metrics, Model, Predictions};
use crate::data::readers::TAG_LABELS;
use crate::data::Batch;
use crate::error::Result;
use crate::nn::{Linear, Seq2SeqEncoder, TokenEmbedder};
use crate::registry::{BuildContext, ConfigurationError, Params};
use crate::tensor::Scope;

/// Per-token tag classifier over a seq2seq encoder.
pub struct Tagger {
    pub embedder: Box<dyn TokenEmbedder>,
    pub encoder: Box<dyn Seq2SeqEncoder>,
    pub projection: Linear,
    pub labels: Vec<String>,
}

impl Model for Tagger {
    fn task(&self) -> &'static str {
        "tagging"
    }

    fn validation_metric(&self) -> &'static str {
        "span_f1"
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn forward<'t>(&self, scope: Scope<'t>, batch: &Batch, with_loss: bool) -> Result<ForwardOutput<'t>> {
        let text = batch.text("tokens")?;
        let (b, t, k) = (text.batch, text.seq_len, self.labels.len());
        let embedded = self.embedder.forward(scope, text)?;
        let encoded = self.encoder.forward(scope, embedded, &text.mask)?;
        let logits = self.projection.forward(scope, encoded)?.reshape(&[b * t, k])?;
        let flat = softmax_rows(&logits.value(), None);
        let probs = (0..b).map(|bi| flat[bi * t..bi * t + text.lengths[bi]].to_vec()).collect();
        let (loss, instance_losses) = if with_loss {
            let tags = batch.tags("tags")?;
            let (loss, rows) = logits.masked_cross_entropy(&tags.ids, Some(text.mask.data()), None, true)?;
            let per_instance = (0..b).map(|bi| rows[bi * t..(bi + 1) * t].iter().sum::<f64>() / text.lengths[bi] as f64).collect();
            (Some(loss), per_instance)
        } else {
            (None, Vec::new())
        };
        Ok(ForwardOutput { loss, instance_losses, predictions: Predictions::Tags { probs } })
    }

    fn new_metrics(&self) -> Metrics {
        Metrics::tagging("tags", self.labels.clone())
    }

    fn decode(&self, predictions: &Predictions, batch: &Batch) -> Result<Vec<Value>> {
        let Predictions::Tags { probs } = predictions else { return Ok(Vec::new()) };
        let tokens = metadata_tokens(batch, "tokens");
        Ok(probs
            .iter()
            .zip(tokens)
            .map(|(rows, tokens)| {
                let tags: Vec<&str> = rows.iter().map(|p| self.labels[argmax(p)].as_str()).collect();
                json!({"tokens": tokens, "tags": tags, "tag_probabilities": rows, "labels": self.labels})
            })
            .collect())
    }
}

pub(super) fn tagger(params: &mut Params, ctx: &mut BuildContext<'_>) -> Result<Box<dyn Model>, ConfigurationError> {
    let embedder = ctx.build::<dyn TokenEmbedder>(params.pop_params("embedder")?)?;
    let encoder = ctx.build::<dyn Seq2SeqEncoder>(params.pop_params("encoder")?)?;
    expect_dim(params, "encoder", Some(encoder.input_dim()), "embedder", embedder.output_dim())?;
    let labels = labels_of(params, ctx.vocab, TAG_LABELS)?;
    let projection = Linear::new(ctx, params, "projection", encoder.output_dim(), labels.len())?;
    Ok(Box::new(Tagger { embedder, encoder, projection, labels }))
}
