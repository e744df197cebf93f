//! The four swappable building blocks of a model, each selected purely by
//! its registry name.

mod conv;
mod embedders;
mod recurrent;
mod seq2vec;
mod span;

pub use conv::ConvFilters;
pub use embedders::{CharacterCnn, ConcatEmbedder, Embedding};
pub use recurrent::{CellKind, RecurrentEncoder};
pub use seq2vec::{CnnEncoder, FinalState, Pooler};
pub use span::{Combination, EndpointSpanExtractor};

use crate::data::TextArray;
use crate::registry::{Abstraction, BuildContext, ConfigurationError, Params, RegistrationError, Registry};
use crate::tensor::{init_uniform, Mask, ParamId, Scope, Tensor, TensorError, Var};

/// Turns a padded text array into `[B, T, output_dim]` vectors.
pub trait TokenEmbedder: Send + Sync {
    fn output_dim(&self) -> usize;
    fn forward<'t>(&self, scope: Scope<'t>, text: &TextArray) -> Result<Var<'t>, TensorError>;
}

/// Maps `[B, T, input_dim]` to `[B, T, output_dim]` under a `[B, T]` mask.
pub trait Seq2SeqEncoder: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn is_bidirectional(&self) -> bool {
        false
    }
    fn forward<'t>(&self, scope: Scope<'t>, x: Var<'t>, mask: &Mask) -> Result<Var<'t>, TensorError>;
}

/// Maps `[B, T, D]` to `[B, output_dim]` under a `[B, T]` mask.
pub trait Seq2VecEncoder: Send + Sync {
    /// Required input width, if the encoder fixes one.
    fn input_dim(&self) -> Option<usize>;
    fn output_dim(&self, input_dim: usize) -> usize;
    fn forward<'t>(&self, scope: Scope<'t>, x: Var<'t>, mask: &Mask) -> Result<Var<'t>, TensorError>;
}

/// Computes `[B, S, output_dim]` span vectors from `[B, T, input_dim]`.
pub trait SpanExtractor: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// `spans` holds `B * S` inclusive `(start, end)` pairs; `span_mask` is
    /// `[B, S]` and `text_mask` is `[B, T]`.
    fn forward<'t>(&self, x: Var<'t>, spans: &[(usize, usize)], span_mask: &Mask, text_mask: &Mask) -> Result<Var<'t>, TensorError>;
}

impl Abstraction for dyn TokenEmbedder {
    const NAME: &'static str = "token_embedder";
}

impl Abstraction for dyn Seq2SeqEncoder {
    const NAME: &'static str = "seq2seq_encoder";
}

impl Abstraction for dyn Seq2VecEncoder {
    const NAME: &'static str = "seq2vec_encoder";
}

impl Abstraction for dyn SpanExtractor {
    const NAME: &'static str = "span_extractor";
}

pub(crate) fn register_builtins(registry: &mut Registry) -> Result<(), RegistrationError> {
    embedders::register(registry)?;
    recurrent::register(registry)?;
    seq2vec::register(registry)?;
    span::register(registry)
}

/// Registers a uniformly initialized weight named `<params path>.<name>`.
pub(crate) fn weight(
    ctx: &mut BuildContext<'_>,
    params: &Params,
    name: &str,
    shape: &[usize],
    fan_in: usize,
) -> Result<ParamId, ConfigurationError> {
    let value = init_uniform(&mut *ctx.rng, shape, fan_in);
    ctx.params.add(params.key_path(name), value).map_err(|e| params.error(name, e.to_string()))
}

/// Registers a zero-initialized bias named `<params path>.<name>`.
pub(crate) fn bias(ctx: &mut BuildContext<'_>, params: &Params, name: &str, len: usize) -> Result<ParamId, ConfigurationError> {
    ctx.params.add(params.key_path(name), Tensor::zeros(&[len])).map_err(|e| params.error(name, e.to_string()))
}

pub(crate) fn positive(params: &mut Params, key: &str, default: Option<usize>) -> Result<usize, ConfigurationError> {
    let value = params.pop_usize(key, default)?;
    if value == 0 {
        return Err(params.error(key, format!("'{key}' must be at least 1")));
    }
    Ok(value)
}

/// Fails unless a consumer's expected width matches its producer's output.
pub fn check_dim(path: &str, consumer: &str, expected: usize, producer: &str, actual: usize) -> Result<(), ConfigurationError> {
    if expected == actual {
        return Ok(());
    }
    Err(ConfigurationError::new(path, format!("{consumer} input_dim {expected} does not match {producer} output_dim {actual}")))
}

/// Dense layer `x W + b` over the last axis.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Linear {
    pub(crate) fn new(
        ctx: &mut BuildContext<'_>,
        params: &Params,
        name: &str,
        input_dim: usize,
        output_dim: usize,
    ) -> Result<Self, ConfigurationError> {
        Ok(Linear {
            weight: weight(ctx, params, &format!("{name}.weight"), &[input_dim, output_dim], input_dim)?,
            bias: bias(ctx, params, &format!("{name}.bias"), output_dim)?,
            input_dim,
            output_dim,
        })
    }

    pub fn forward<'t>(&self, scope: Scope<'t>, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        x.matmul(scope.param(self.weight))?.add_bias(scope.param(self.bias))
    }
}

/// Zeroes entries at masked positions of a `[B, T, D]` tensor.
pub(crate) fn zero_masked<'t>(scope: Scope<'t>, x: Var<'t>, mask: &Mask) -> Result<Var<'t>, TensorError> {
    let mut shape = mask.shape().to_vec();
    shape.push(1);
    let m = scope.constant(mask.to_tensor().reshape(&shape)?);
    x.mul(m)
}

/// Rows `[b * T + t]` selecting one position per batch row, for a `[B, T, D]`
/// tensor viewed as `[B * T, D]`.
pub(crate) fn positions(seq_len: usize, picks: impl IntoIterator<Item = usize>) -> Vec<usize> {
    picks.into_iter().enumerate().map(|(b, t)| b * seq_len + t).collect()
}

pub(crate) fn dims3(x: &Var<'_>, op: &'static str) -> Result<(usize, usize, usize), TensorError> {
    match x.shape()[..] {
        [b, t, d] => Ok((b, t, d)),
        _ => Err(TensorError::InvalidShape { op, shape: x.shape(), expected: "[B, T, D]".into() }),
    }
}

pub(crate) fn check_mask(x: &Var<'_>, mask: &Mask, op: &'static str) -> Result<(usize, usize, usize), TensorError> {
    let (b, t, d) = dims3(x, op)?;
    if mask.shape() != [b, t] {
        return Err(TensorError::ShapeMismatch { op, left: x.shape(), right: mask.shape().to_vec() });
    }
    Ok((b, t, d))
}

pub(crate) fn check_width(x: &Var<'_>, expected: usize, op: &'static str) -> Result<(), TensorError> {
    let (_, _, d) = dims3(x, op)?;
    if d != expected {
        return Err(TensorError::InvalidShape { op, shape: x.shape(), expected: format!("last dimension {expected}") });
    }
    Ok(())
}
