use std::collections::{BTreeMap, BTreeSet};

use super::{argmax, Predictions};
use crate::data::{Batch, DataError};

/// Running metric counts, reset between epochs by building a fresh value.
#[derive(Debug, Clone, PartialEq)]
pub enum Metrics {
    /// Label accuracy against the gold field.
    Accuracy { field: String, correct: usize, total: usize },
    /// Token accuracy plus exact-match F1 over BIO segments.
    Tagging { field: String, labels: Vec<String>, correct: usize, total: usize, matched: usize, predicted: usize, gold: usize },
    /// Exact span match plus positional token-overlap F1.
    Spans { field: String, exact: usize, f1_sum: f64, total: usize },
}

/// `(start, end inclusive, type)` segments of a BIO tag sequence. An `I-X`
/// that does not continue an `X` segment opens a new one; anything without a
/// `B-`/`I-` prefix is outside.
pub fn bio_segments<S: AsRef<str>>(tags: &[S]) -> Vec<(usize, usize, String)> {
    let mut out = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let (prefix, kind) = match tag.split_once('-') {
            Some((p @ ("B" | "I"), k)) => (p, k),
            _ => ("O", ""),
        };
        let continues = prefix == "I" && open.as_ref().is_some_and(|(_, k)| k == kind);
        if !continues {
            if let Some((start, k)) = open.take() {
                out.push((start, i - 1, k));
            }
            if prefix != "O" {
                open = Some((i, kind.to_string()));
            }
        }
    }
    if let Some((start, k)) = open {
        out.push((start, tags.len() - 1, k));
    }
    out
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl Metrics {
    pub fn accuracy(field: &str) -> Self {
        Metrics::Accuracy { field: field.into(), correct: 0, total: 0 }
    }

    pub fn tagging(field: &str, labels: Vec<String>) -> Self {
        Metrics::Tagging { field: field.into(), labels, correct: 0, total: 0, matched: 0, predicted: 0, gold: 0 }
    }

    pub fn spans(field: &str) -> Self {
        Metrics::Spans { field: field.into(), exact: 0, f1_sum: 0.0, total: 0 }
    }

    /// Adds one batch of predictions against the batch's gold field.
    pub fn update(&mut self, predictions: &Predictions, batch: &Batch) -> Result<(), DataError> {
        let mismatch = || DataError::SchemaMismatch("predictions do not match the metric's task".into());
        match (self, predictions) {
            (Metrics::Accuracy { field, correct, total }, Predictions::Classes { probs }) => {
                let gold = batch.labels(field)?;
                for (p, &g) in probs.iter().zip(gold) {
                    *correct += usize::from(argmax(p) == g);
                    *total += 1;
                }
            }
            (Metrics::Tagging { field, labels, correct, total, matched, predicted, gold }, Predictions::Tags { probs }) => {
                let tags = batch.tags(field)?;
                let t = tags.mask.last_dim();
                for (b, rows) in probs.iter().enumerate() {
                    let pred: Vec<usize> = rows.iter().map(|p| argmax(p)).collect();
                    let truth = &tags.ids[b * t..b * t + rows.len()];
                    *correct += pred.iter().zip(truth).filter(|(p, g)| p == g).count();
                    *total += rows.len();
                    let name = |ids: &[usize]| ids.iter().map(|&i| labels.get(i).cloned().unwrap_or_default()).collect::<Vec<_>>();
                    let ps: BTreeSet<_> = bio_segments(&name(&pred)).into_iter().collect();
                    let gs: BTreeSet<_> = bio_segments(&name(truth)).into_iter().collect();
                    *matched += ps.intersection(&gs).count();
                    *predicted += ps.len();
                    *gold += gs.len();
                }
            }
            (Metrics::Spans { field, exact, f1_sum, total }, Predictions::Spans { best, .. }) => {
                let gold = batch.spans(field)?;
                for (&(ps, pe), &(gs, ge)) in best.iter().zip(gold) {
                    *exact += usize::from((ps, pe) == (gs, ge));
                    let overlap = (pe.min(ge) + 1).saturating_sub(ps.max(gs));
                    *f1_sum += f1(ratio(overlap, pe - ps + 1), ratio(overlap, ge - gs + 1));
                    *total += 1;
                }
            }
            _ => return Err(mismatch()),
        }
        Ok(())
    }

    /// Current values, all fractions in `[0, 1]`.
    pub fn values(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        match self {
            Metrics::Accuracy { correct, total, .. } => {
                out.insert("accuracy".into(), ratio(*correct, *total));
            }
            Metrics::Tagging { correct, total, matched, predicted, gold, .. } => {
                let (p, r) = (ratio(*matched, *predicted), ratio(*matched, *gold));
                out.insert("accuracy".into(), ratio(*correct, *total));
                out.insert("precision".into(), p);
                out.insert("recall".into(), r);
                out.insert("span_f1".into(), f1(p, r));
            }
            Metrics::Spans { exact, f1_sum, total, .. } => {
                out.insert("exact_match".into(), ratio(*exact, *total));
                out.insert("f1".into(), if *total == 0 { 0.0 } else { f1_sum / *total as f64 });
            }
        }
        out
    }
}
