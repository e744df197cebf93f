use super::{check_mask, check_width, positive, SpanExtractor};
use crate::registry::{BuildContext, ConfigurationError, Params, RegistrationError, Registry};
use crate::tensor::{Mask, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combination {
    /// `[x_start; x_end]`
    Concat,
    /// `x_end - x_start`
    Diff,
    /// `[x_start; x_end; x_end - x_start]`
    ConcatDiff,
}

impl Combination {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "concat" => Some(Combination::Concat),
            "diff" => Some(Combination::Diff),
            "concat+diff" => Some(Combination::ConcatDiff),
            _ => None,
        }
    }

    pub fn width(self, input_dim: usize) -> usize {
        match self {
            Combination::Concat => 2 * input_dim,
            Combination::Diff => input_dim,
            Combination::ConcatDiff => 3 * input_dim,
        }
    }
}

/// Span vectors built from the token vectors at the two (inclusive)
/// endpoints. Masked spans come out as zeros.
#[derive(Debug, Clone)]
pub struct EndpointSpanExtractor {
    pub input_dim: usize,
    pub combination: Combination,
}

impl SpanExtractor for EndpointSpanExtractor {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.combination.width(self.input_dim)
    }

    fn forward<'t>(&self, x: Var<'t>, spans: &[(usize, usize)], span_mask: &Mask, text_mask: &Mask) -> Result<Var<'t>, TensorError> {
        let (b, t, h) = check_mask(&x, text_mask, "span_extractor")?;
        check_width(&x, self.input_dim, "span_extractor")?;
        let s = span_mask.last_dim();
        if span_mask.shape() != [b, s] || spans.len() != b * s {
            return Err(TensorError::ShapeMismatch { op: "span_extractor", left: vec![spans.len(), 2], right: span_mask.shape().to_vec() });
        }
        let lengths = text_mask.row_counts();
        let mut starts = Vec::with_capacity(b * s);
        let mut ends = Vec::with_capacity(b * s);
        for (i, (&(start, end), &live)) in spans.iter().zip(span_mask.data()).enumerate() {
            let bi = i / s.max(1);
            let (start, end) = if live { (start, end) } else { (0, 0) };
            if live && (start > end || end >= lengths[bi]) {
                return Err(TensorError::IndexOutOfRange { op: "span_extractor", index: end.max(start), bound: lengths[bi] });
            }
            starts.push(bi * t + start);
            ends.push(bi * t + end);
        }
        let a = x.gather_rows(&starts, &[b, s, h])?;
        let z = x.gather_rows(&ends, &[b, s, h])?;
        let combined = match self.combination {
            Combination::Concat => Var::concat_last(&[a, z])?,
            Combination::Diff => z.sub(a)?,
            Combination::ConcatDiff => Var::concat_last(&[a, z, z.sub(a)?])?,
        };
        let live = Tensor::new(vec![b, s, 1], span_mask.to_tensor().into_data())?;
        combined.mul(x.tape().leaf(live))
    }
}

fn endpoint(params: &mut Params, _: &mut BuildContext<'_>) -> Result<Box<dyn SpanExtractor>, ConfigurationError> {
    let input_dim = positive(params, "input_dim", None)?;
    let name = params.pop_choice("combination", &["concat", "diff", "concat+diff"], Some("concat"))?;
    let combination = Combination::parse(&name).expect("validated by pop_choice");
    Ok(Box::new(EndpointSpanExtractor { input_dim, combination }))
}

pub(super) fn register(registry: &mut Registry) -> Result<(), RegistrationError> {
    registry.register::<dyn SpanExtractor>("endpoint", endpoint)
}
