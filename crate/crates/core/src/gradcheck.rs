//! Central finite-difference checks of tape gradients.

use crate::data::Batch;
use crate::error::Result;
use crate::models::Model;
use crate::tensor::{ParamStore, Scope, Tape, Tensor, TensorError, Var};

/// Finite-difference step.
pub const STEP: f64 = 1e-3;
/// Magnitudes below this are compared absolutely rather than relatively.
pub const MAGNITUDE_FLOOR: f64 = 1e-2;

/// `|a - n| / max(|a|, |n|, MAGNITUDE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

/// Outcome of one gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_relative_error: f64,
    /// Where the largest error occurred, e.g. `input 1 [4]`.
    pub worst: String,
}

impl GradCheck {
    fn new() -> Self {
        GradCheck { checked: 0, max_relative_error: 0.0, worst: String::new() }
    }

    fn record(&mut self, analytic: f64, numeric: f64, at: impl FnOnce() -> String) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_relative_error || err.is_nan() {
            self.max_relative_error = err;
            self.worst = at();
        }
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Checks `f`, which must reduce its inputs to a one-element value, against
/// central differences in every input coordinate.
pub fn check_function<F>(f: F, inputs: &[Tensor]) -> Result<GradCheck, TensorError>
where
    F: for<'t> Fn(&[Var<'t>]) -> Result<Var<'t>, TensorError>,
{
    let eval = |xs: &[Tensor]| -> Result<f64, TensorError> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        Ok(f(&vars)?.item())
    };
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = f(&vars)?;
    let grads = tape.backward(out)?;
    let mut report = GradCheck::new();
    let mut xs = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var).cloned().unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        for k in 0..inputs[i].numel() {
            let base = xs[i].data()[k];
            xs[i].data_mut()[k] = base + STEP;
            let plus = eval(&xs)?;
            xs[i].data_mut()[k] = base - STEP;
            let minus = eval(&xs)?;
            xs[i].data_mut()[k] = base;
            report.record(analytic.data()[k], (plus - minus) / (2.0 * STEP), || format!("input {i} [{k}]"));
        }
    }
    Ok(report)
}

/// Checks a model's training loss on `batch` against central differences in
/// its parameters. At most `per_tensor` evenly spaced coordinates of each
/// parameter tensor are perturbed; `None` checks them all.
pub fn check_model(model: &dyn Model, store: &mut ParamStore, batch: &Batch, per_tensor: Option<usize>) -> Result<GradCheck> {
    let loss_at = |store: &ParamStore| -> Result<f64> {
        let tape = Tape::new();
        let out = model.forward(Scope::new(&tape, store), batch, true)?;
        Ok(out.loss.expect("loss requested").item())
    };
    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let out = model.forward(Scope::new(&tape, store), batch, true)?;
        let grads = tape.backward(out.loss.expect("loss requested"))?;
        store.ids().map(|id| grads.param(id).cloned().unwrap_or_else(|| Tensor::zeros(store.value(id).shape()))).collect()
    };
    let mut report = GradCheck::new();
    for id in store.ids().collect::<Vec<_>>() {
        let n = store.value(id).numel();
        let count = per_tensor.map_or(n, |c| c.min(n)).max(1);
        let coords: Vec<usize> = (0..count).map(|j| j * n / count).collect();
        for k in coords {
            let base = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = base + STEP;
            let plus = loss_at(store)?;
            store.value_mut(id).data_mut()[k] = base - STEP;
            let minus = loss_at(store)?;
            store.value_mut(id).data_mut()[k] = base;
            report.record(analytic[id.index()].data()[k], (plus - minus) / (2.0 * STEP), || format!("{} [{k}]", store.name(id)));
        }
    }
    Ok(report)
}
