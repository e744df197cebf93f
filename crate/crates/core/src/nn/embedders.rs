use std::fs;

use super::{positive, weight, ConvFilters, TokenEmbedder};
use crate::data::{TextArray, TOKENS};
use crate::registry::{BuildContext, ConfigurationError, Params, RegistrationError, Registry};
use crate::tensor::{ParamId, Scope, TensorError, Var};

/// Word-id lookup into a `[V, D]` table over the `tokens` namespace.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub dim: usize,
}

impl TokenEmbedder for Embedding {
    fn output_dim(&self) -> usize {
        self.dim
    }

    fn forward<'t>(&self, scope: Scope<'t>, text: &TextArray) -> Result<Var<'t>, TensorError> {
        scope.param(self.table).embedding_lookup(&text.word_ids, &[text.batch, text.seq_len])
    }
}

/// Per-token character convolutions, max-pooled over character positions.
#[derive(Debug, Clone)]
pub struct CharacterCnn {
    pub table: ParamId,
    pub conv: ConvFilters,
}

impl CharacterCnn {
    /// Embeds `[N, C]` character ids (`C >= max width`) for tokens whose
    /// character counts are `lengths`.
    pub fn encode_chars<'t>(&self, scope: Scope<'t>, ids: &[usize], n: usize, c: usize, lengths: &[usize]) -> Result<Var<'t>, TensorError> {
        let chars = scope.param(self.table).embedding_lookup(ids, &[n, c])?;
        self.conv.forward(scope, chars, lengths)
    }
}

impl TokenEmbedder for CharacterCnn {
    fn output_dim(&self) -> usize {
        self.conv.output_dim()
    }

    fn forward<'t>(&self, scope: Scope<'t>, text: &TextArray) -> Result<Var<'t>, TensorError> {
        let (b, t, c) = (text.batch, text.seq_len, text.char_len);
        let width = c.max(self.conv.max_width());
        let n = b * t;
        let mut ids = vec![0; n * width];
        for (row, chunk) in text.char_ids.chunks(c.max(1)).take(n).enumerate() {
            ids[row * width..row * width + c].copy_from_slice(&chunk[..c]);
        }
        let lengths = text.char_mask.row_counts();
        let lengths = if c == 0 { vec![0; n] } else { lengths };
        let out = self.encode_chars(scope, &ids, n, width, &lengths)?;
        out.reshape(&[b, t, self.output_dim()])
    }
}

/// Concatenates the outputs of several embedders.
pub struct ConcatEmbedder {
    pub members: Vec<Box<dyn TokenEmbedder>>,
}

impl TokenEmbedder for ConcatEmbedder {
    fn output_dim(&self) -> usize {
        self.members.iter().map(|m| m.output_dim()).sum()
    }

    fn forward<'t>(&self, scope: Scope<'t>, text: &TextArray) -> Result<Var<'t>, TensorError> {
        let parts = self.members.iter().map(|m| m.forward(scope, text)).collect::<Result<Vec<_>, _>>()?;
        Var::concat_last(&parts)
    }
}

type EmbedderResult = Result<Box<dyn TokenEmbedder>, ConfigurationError>;

fn embedding(params: &mut Params, ctx: &mut BuildContext<'_>) -> EmbedderResult {
    let dim = positive(params, "embedding_dim", None)?;
    let pretrained = params.pop_opt("pretrained_file")?;
    let vocab_size = ctx.vocab.size(TOKENS);
    let table = weight(ctx, params, "weight", &[vocab_size, dim], dim)?;
    if let Some(value) = pretrained {
        let path = value.as_str().ok_or_else(|| params.error("pretrained_file", "expected a string path"))?.to_string();
        load_pretrained(ctx, params, table, dim, &path)?;
    }
    Ok(Box::new(Embedding { table, dim }))
}

/// Overwrites rows of `table` for tokens listed in a `token v1 ... vD` file.
fn load_pretrained(ctx: &mut BuildContext<'_>, params: &Params, table: ParamId, dim: usize, path: &str) -> Result<(), ConfigurationError> {
    let fail = |msg: String| params.error("pretrained_file", msg);
    let text = fs::read_to_string(path).map_err(|e| fail(format!("could not read '{path}': {e}")))?;
    let values = ctx.params.value_mut(table);
    let mut loaded = 0;
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let vector: Vec<f64> =
            parts.map(str::parse::<f64>).collect::<Result<_, _>>().map_err(|e| fail(format!("{path}:{}: {e}", i + 1)))?;
        if vector.len() != dim || vector.iter().any(|v| !v.is_finite()) {
            return Err(fail(format!("{path}:{}: expected {dim} finite values, found {}", i + 1, vector.len())));
        }
        if let Some(id) = ctx.vocab.token_to_id(TOKENS, token) {
            values.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&vector);
            loaded += 1;
        }
    }
    log::info!("loaded {loaded} pretrained vectors from {path}");
    Ok(())
}

fn character_cnn(params: &mut Params, ctx: &mut BuildContext<'_>) -> EmbedderResult {
    let dim = positive(params, "embedding_dim", None)?;
    let num_filters = positive(params, "num_filters", None)?;
    let widths = params.pop_usize_list("ngram_filter_sizes", Some(vec![2, 3]))?;
    if widths.is_empty() || widths.contains(&0) {
        return Err(params.error("ngram_filter_sizes", "expected a non-empty list of positive widths"));
    }
    let chars = ctx.vocab.size(crate::data::CHARACTERS);
    let table = weight(ctx, params, "char_weight", &[chars, dim], dim)?;
    let conv = ConvFilters::new(ctx, params, dim, num_filters, &widths)?;
    Ok(Box::new(CharacterCnn { table, conv }))
}

fn concat(params: &mut Params, ctx: &mut BuildContext<'_>) -> EmbedderResult {
    let list = params.pop_params_list("embedders")?;
    if list.is_empty() {
        return Err(params.error("embedders", "expected at least one embedder"));
    }
    let members = list.into_iter().map(|p| ctx.build::<dyn TokenEmbedder>(p)).collect::<Result<Vec<_>, _>>()?;
    Ok(Box::new(ConcatEmbedder { members }))
}

pub(super) fn register(registry: &mut Registry) -> Result<(), RegistrationError> {
    registry.register::<dyn TokenEmbedder>("embedding", embedding)?;
    registry.register::<dyn TokenEmbedder>("character_cnn", character_cnn)?;
    registry.register::<dyn TokenEmbedder>("concat", concat)
}
