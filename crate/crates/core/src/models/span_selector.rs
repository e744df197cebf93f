use serde_json::{json, Value};

use super::{expect_dim, metadata_tokens, softmax_rows, ForwardOutput, Metrics, Model, Predictions};
use crate::data::Batch;
use crate::error::Result;
use crate::nn::{check_dim, Linear, Seq2SeqEncoder, Seq2VecEncoder, TokenEmbedder};
use crate::registry::{BuildContext, ConfigurationError, Params};
use crate::tensor::{Scope, Var};

/// Scores start and end positions over the passage.
///
/// The question is pooled into one vector and appended to every encoded
/// passage position. Start logits come from that joint representation; end
/// logits optionally also see a second seq2seq pass over it.
pub struct SpanSelector {
    pub embedder: Box<dyn TokenEmbedder>,
    pub question_encoder: Box<dyn Seq2VecEncoder>,
    pub passage_encoder: Box<dyn Seq2SeqEncoder>,
    pub end_encoder: Option<Box<dyn Seq2SeqEncoder>>,
    pub start_scorer: Linear,
    pub end_scorer: Linear,
}

/// The `(start, end)` with `start <= end` maximizing `p_start * p_end`,
/// first in lexicographic order on ties.
pub fn best_span(start: &[f64], end: &[f64]) -> (usize, usize) {
    let mut best = (0, 0);
    let mut score = f64::NEG_INFINITY;
    for (s, ps) in start.iter().enumerate() {
        for (e, pe) in end.iter().enumerate().skip(s) {
            if ps * pe > score {
                score = ps * pe;
                best = (s, e);
            }
        }
    }
    best
}

impl Model for SpanSelector {
    fn task(&self) -> &'static str {
        "span_selection"
    }

    fn validation_metric(&self) -> &'static str {
        "exact_match"
    }

    fn labels(&self) -> &[String] {
        &[]
    }

    fn forward<'t>(&self, scope: Scope<'t>, batch: &Batch, with_loss: bool) -> Result<ForwardOutput<'t>> {
        let question = batch.text("question")?;
        let passage = batch.text("passage")?;
        let (b, t) = (passage.batch, passage.seq_len);
        let q = self.question_encoder.forward(scope, self.embedder.forward(scope, question)?, &question.mask)?;
        let p = self.passage_encoder.forward(scope, self.embedder.forward(scope, passage)?, &passage.mask)?;
        let q_width = q.shape()[1];
        let tiled = q.gather_rows(&(0..b * t).map(|i| i / t.max(1)).collect::<Vec<_>>(), &[b, t, q_width])?;
        let joint = Var::concat_last(&[p, tiled])?;
        let start_logits = self.start_scorer.forward(scope, joint)?.reshape(&[b, t])?;
        let end_input = match &self.end_encoder {
            Some(enc) => Var::concat_last(&[joint, enc.forward(scope, joint, &passage.mask)?])?,
            None => joint,
        };
        let end_logits = self.end_scorer.forward(scope, end_input)?.reshape(&[b, t])?;
        let lens = &passage.lengths;
        let start = softmax_rows(&start_logits.value(), Some(lens));
        let end = softmax_rows(&end_logits.value(), Some(lens));
        let best = start.iter().zip(&end).map(|(s, e)| best_span(s, e)).collect();
        let (loss, instance_losses) = if with_loss {
            let spans = batch.spans("span")?;
            let starts: Vec<usize> = spans.iter().map(|s| s.0).collect();
            let ends: Vec<usize> = spans.iter().map(|s| s.1).collect();
            let (ls, rs) = start_logits.masked_cross_entropy(&starts, None, Some(&passage.mask), true)?;
            let (le, re) = end_logits.masked_cross_entropy(&ends, None, Some(&passage.mask), true)?;
            (Some(ls.add(le)?), rs.iter().zip(&re).map(|(a, b)| a + b).collect())
        } else {
            (None, Vec::new())
        };
        Ok(ForwardOutput { loss, instance_losses, predictions: Predictions::Spans { start, end, best } })
    }

    fn new_metrics(&self) -> Metrics {
        Metrics::spans("span")
    }

    fn decode(&self, predictions: &Predictions, batch: &Batch) -> Result<Vec<Value>> {
        let Predictions::Spans { start, end, best } = predictions else { return Ok(Vec::new()) };
        let tokens = metadata_tokens(batch, "passage_tokens");
        Ok((0..best.len())
            .map(|i| {
                let (s, e) = best[i];
                let answer = tokens[i].as_array().map(|ts| ts[s..=e].iter().filter_map(Value::as_str).collect::<Vec<_>>().join(" "));
                json!({
                    "passage_tokens": tokens[i],
                    "span": [s, e],
                    "answer": answer,
                    "span_start_probabilities": start[i],
                    "span_end_probabilities": end[i],
                })
            })
            .collect())
    }
}

pub(super) fn span_selector(params: &mut Params, ctx: &mut BuildContext<'_>) -> Result<Box<dyn Model>, ConfigurationError> {
    let embedder = ctx.build::<dyn TokenEmbedder>(params.pop_params("embedder")?)?;
    let question_encoder = ctx.build::<dyn Seq2VecEncoder>(params.pop_params("question_encoder")?)?;
    let passage_encoder = ctx.build::<dyn Seq2SeqEncoder>(params.pop_params("passage_encoder")?)?;
    let dim = embedder.output_dim();
    expect_dim(params, "question_encoder", question_encoder.input_dim(), "embedder", dim)?;
    expect_dim(params, "passage_encoder", Some(passage_encoder.input_dim()), "embedder", dim)?;
    let joint = passage_encoder.output_dim() + question_encoder.output_dim(dim);
    let end_encoder = match params.pop_params_opt("end_encoder")? {
        Some(p) => {
            let path = p.key_path("input_dim");
            let enc = ctx.build::<dyn Seq2SeqEncoder>(p)?;
            let producer = format!("{} + {}", params.key_path("passage_encoder"), params.key_path("question_encoder"));
            check_dim(&path, &params.key_path("end_encoder"), enc.input_dim(), &producer, joint)?;
            Some(enc)
        }
        None => None,
    };
    let end_width = joint + end_encoder.as_ref().map_or(0, |e| e.output_dim());
    let start_scorer = Linear::new(ctx, params, "start_scorer", joint, 1)?;
    let end_scorer = Linear::new(ctx, params, "end_scorer", end_width, 1)?;
    Ok(Box::new(SpanSelector { embedder, question_encoder, passage_encoder, end_encoder, start_scorer, end_scorer }))
}
