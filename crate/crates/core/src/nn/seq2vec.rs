use super::{check_mask, check_width, positive, zero_masked, ConvFilters, Seq2SeqEncoder, Seq2VecEncoder};
use crate::registry::{BuildContext, ConfigurationError, Params, RegistrationError, Registry};
use crate::tensor::{Mask, PoolKind, Scope, TensorError, Var};

/// Masked mean or max over time.
#[derive(Debug, Clone)]
pub struct Pooler {
    pub kind: PoolKind,
    pub input_dim: Option<usize>,
}

impl Seq2VecEncoder for Pooler {
    fn input_dim(&self) -> Option<usize> {
        self.input_dim
    }

    fn output_dim(&self, input_dim: usize) -> usize {
        input_dim
    }

    fn forward<'t>(&self, _: Scope<'t>, x: Var<'t>, mask: &Mask) -> Result<Var<'t>, TensorError> {
        check_mask(&x, mask, "pooler")?;
        if let Some(d) = self.input_dim {
            check_width(&x, d, "pooler")?;
        }
        x.masked_pool(self.kind, mask)
    }
}

/// Convolution over time with relu and masked max pooling per filter width.
#[derive(Debug, Clone)]
pub struct CnnEncoder {
    pub conv: ConvFilters,
}

impl Seq2VecEncoder for CnnEncoder {
    fn input_dim(&self) -> Option<usize> {
        Some(self.conv.input_dim)
    }

    fn output_dim(&self, _: usize) -> usize {
        self.conv.output_dim()
    }

    fn forward<'t>(&self, scope: Scope<'t>, x: Var<'t>, mask: &Mask) -> Result<Var<'t>, TensorError> {
        let (b, t, d) = check_mask(&x, mask, "cnn")?;
        check_width(&x, self.conv.input_dim, "cnn")?;
        let x = zero_masked(scope, x, mask)?;
        let width = t.max(self.conv.max_width());
        let x = if width > t {
            let flat = x.reshape(&[b, t * d])?;
            Var::concat_last(&[flat, scope.zeros(&[b, (width - t) * d])])?.reshape(&[b, width, d])?
        } else {
            x
        };
        self.conv.forward(scope, x, &mask.row_counts())
    }
}

/// Final hidden state of a wrapped seq2seq encoder: the forward half at the
/// last real position and, if bidirectional, the backward half at position 0.
pub struct FinalState {
    pub encoder: Box<dyn Seq2SeqEncoder>,
}

impl Seq2VecEncoder for FinalState {
    fn input_dim(&self) -> Option<usize> {
        Some(self.encoder.input_dim())
    }

    fn output_dim(&self, _: usize) -> usize {
        self.encoder.output_dim()
    }

    fn forward<'t>(&self, scope: Scope<'t>, x: Var<'t>, mask: &Mask) -> Result<Var<'t>, TensorError> {
        let (b, t, _) = check_mask(&x, mask, "final_state")?;
        let lengths = mask.row_counts();
        if let Some(row) = lengths.iter().position(|&l| l == 0) {
            return Err(TensorError::EmptyMaskRow { op: "final_state", row });
        }
        let out = self.encoder.forward(scope, x, mask)?;
        let h = self.encoder.output_dim();
        let last = out.gather_rows(&super::positions(t, lengths.iter().map(|l| l - 1)), &[b, h])?;
        if !self.encoder.is_bidirectional() {
            return Ok(last);
        }
        let half = h / 2;
        let first = out.gather_rows(&super::positions(t, vec![0; b]), &[b, h])?;
        Var::concat_last(&[last.slice_last(0, half)?, first.slice_last(half, half)?])
    }
}

type VecResult = Result<Box<dyn Seq2VecEncoder>, ConfigurationError>;

fn optional_dim(params: &mut Params) -> Result<Option<usize>, ConfigurationError> {
    if params.contains("input_dim") {
        positive(params, "input_dim", None).map(Some)
    } else {
        Ok(None)
    }
}

fn mean_pooler(params: &mut Params, _: &mut BuildContext<'_>) -> VecResult {
    Ok(Box::new(Pooler { kind: PoolKind::Mean, input_dim: optional_dim(params)? }))
}

fn max_pooler(params: &mut Params, _: &mut BuildContext<'_>) -> VecResult {
    Ok(Box::new(Pooler { kind: PoolKind::Max, input_dim: optional_dim(params)? }))
}

fn cnn(params: &mut Params, ctx: &mut BuildContext<'_>) -> VecResult {
    let input_dim = positive(params, "input_dim", None)?;
    let num_filters = positive(params, "num_filters", None)?;
    let widths = params.pop_usize_list("ngram_filter_sizes", Some(vec![2, 3]))?;
    if widths.is_empty() || widths.contains(&0) {
        return Err(params.error("ngram_filter_sizes", "expected a non-empty list of positive widths"));
    }
    Ok(Box::new(CnnEncoder { conv: ConvFilters::new(ctx, params, input_dim, num_filters, &widths)? }))
}

fn final_state(params: &mut Params, ctx: &mut BuildContext<'_>) -> VecResult {
    let inner = params.pop_params("encoder")?;
    Ok(Box::new(FinalState { encoder: ctx.build::<dyn Seq2SeqEncoder>(inner)? }))
}

pub(super) fn register(registry: &mut Registry) -> Result<(), RegistrationError> {
    registry.register::<dyn Seq2VecEncoder>("mean_pooler", mean_pooler)?;
    registry.register::<dyn Seq2VecEncoder>("max_pooler", max_pooler)?;
    registry.register::<dyn Seq2VecEncoder>("cnn", cnn)?;
    registry.register::<dyn Seq2VecEncoder>("final_state", final_state)
}
