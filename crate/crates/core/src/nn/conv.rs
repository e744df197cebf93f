use super::{bias, weight};
use crate::registry::{BuildContext, ConfigurationError, Params};
use crate::tensor::{Mask, ParamId, PoolKind, Scope, TensorError, Var};

/// A bank of 1-D convolutions over time followed by relu and masked
/// max-over-time pooling, one filter group per width.
#[derive(Debug, Clone)]
pub struct ConvFilters {
    pub input_dim: usize,
    pub num_filters: usize,
    groups: Vec<(usize, ParamId, ParamId)>,
}

impl ConvFilters {
    pub(crate) fn new(
        ctx: &mut BuildContext<'_>,
        params: &Params,
        input_dim: usize,
        num_filters: usize,
        widths: &[usize],
    ) -> Result<Self, ConfigurationError> {
        let mut groups = Vec::with_capacity(widths.len());
        for &w in widths {
            let fan_in = w * input_dim;
            let wid = weight(ctx, params, &format!("conv{w}.weight"), &[fan_in, num_filters], fan_in)?;
            let bid = bias(ctx, params, &format!("conv{w}.bias"), num_filters)?;
            groups.push((w, wid, bid));
        }
        Ok(ConvFilters { input_dim, num_filters, groups })
    }

    pub fn widths(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.0).collect()
    }

    pub fn max_width(&self) -> usize {
        self.groups.iter().map(|g| g.0).max().unwrap_or(1)
    }

    pub fn output_dim(&self) -> usize {
        self.num_filters * self.groups.len()
    }

    /// `x` is `[N, L, input_dim]` with `L >= max_width()`; `lengths[n]` is the
    /// number of real positions in row `n`. A window at `p` counts when
    /// `p + w <= max(len, w)`, so rows shorter than a filter see exactly one
    /// window padded on the right.
    pub fn forward<'t>(&self, scope: Scope<'t>, x: Var<'t>, lengths: &[usize]) -> Result<Var<'t>, TensorError> {
        let (n, l, e) = super::dims3(&x, "conv")?;
        if lengths.len() != n || l < self.max_width() || e != self.input_dim {
            return Err(TensorError::InvalidShape {
                op: "conv",
                shape: x.shape(),
                expected: format!("[{}, >= {}, {}]", lengths.len(), self.max_width(), self.input_dim),
            });
        }
        let mut pooled = Vec::with_capacity(self.groups.len());
        for &(w, wid, bid) in &self.groups {
            let p = l - w + 1;
            let mut rows = Vec::with_capacity(n * p * w);
            let mut valid = Vec::with_capacity(n * p);
            for (ni, &len) in lengths.iter().enumerate() {
                for pi in 0..p {
                    rows.extend((0..w).map(|j| ni * l + pi + j));
                    valid.push(pi + w <= len.max(w));
                }
            }
            let windows = x.gather_rows(&rows, &[n * p * w, e])?.reshape(&[n, p, w * e])?;
            let h = windows.matmul(scope.param(wid))?.add_bias(scope.param(bid))?.relu();
            pooled.push(h.masked_pool(PoolKind::Max, &Mask::new(vec![n, p], valid)?)?);
        }
        Var::concat_last(&pooled)
    }
}
