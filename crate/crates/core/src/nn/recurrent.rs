use super::{bias, check_mask, check_width, positive, weight, Seq2SeqEncoder};
use crate::registry::{BuildContext, ConfigurationError, Params, RegistrationError, Registry};
use crate::tensor::{Mask, ParamId, Scope, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Rnn,
    Gru,
    Lstm,
}

impl CellKind {
    fn gates(self) -> usize {
        match self {
            CellKind::Rnn => 1,
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }
}

/// Weights for one direction: input `[D, G*H]`, hidden `[H, G*H]`, bias `[G*H]`.
/// GRU gates are ordered r, z, n and LSTM gates i, f, g, o.
#[derive(Debug, Clone, Copy)]
pub struct DirectionWeights {
    pub input: ParamId,
    pub hidden: ParamId,
    pub bias: ParamId,
}

/// Single-layer recurrent encoder. Padded steps hold the previous state and
/// emit zeros; the backward direction runs over each sequence reversed within
/// its true length.
#[derive(Debug, Clone)]
pub struct RecurrentEncoder {
    pub cell: CellKind,
    pub input_dim: usize,
    pub hidden_size: usize,
    pub forward: DirectionWeights,
    pub backward: Option<DirectionWeights>,
}

impl RecurrentEncoder {
    fn run<'t>(&self, scope: Scope<'t>, w: &DirectionWeights, x: Var<'t>, mask: &Mask) -> Result<Var<'t>, TensorError> {
        let (b, t, _) = check_mask(&x, mask, "recurrent")?;
        let h_size = self.hidden_size;
        let g = self.cell.gates() * h_size;
        let projected = x.matmul(scope.param(w.input))?.add_bias(scope.param(w.bias))?;
        let w_h = scope.param(w.hidden);
        let zeros = scope.zeros(&[b, h_size]);
        let mut h = zeros;
        let mut c = zeros;
        let mut outputs = Vec::with_capacity(t);
        for step in 0..t {
            let rows: Vec<usize> = (0..b).map(|bi| bi * t + step).collect();
            let xt = projected.gather_rows(&rows, &[b, g])?;
            let hh = h.matmul(w_h)?;
            let gate = |v: Var<'t>, k: usize| v.slice_last(k * h_size, h_size);
            let (h_new, c_new) = match self.cell {
                CellKind::Rnn => (xt.add(hh)?.tanh(), c),
                CellKind::Gru => {
                    let r = gate(xt, 0)?.add(gate(hh, 0)?)?.sigmoid();
                    let z = gate(xt, 1)?.add(gate(hh, 1)?)?.sigmoid();
                    let n = gate(xt, 2)?.add(r.mul(gate(hh, 2)?)?)?.tanh();
                    (n.add(z.mul(h.sub(n)?)?)?, c)
                }
                CellKind::Lstm => {
                    let pre = xt.add(hh)?;
                    let i = gate(pre, 0)?.sigmoid();
                    let f = gate(pre, 1)?.sigmoid();
                    let cand = gate(pre, 2)?.tanh();
                    let o = gate(pre, 3)?.sigmoid();
                    let c_new = f.mul(c)?.add(i.mul(cand)?)?;
                    (o.mul(c_new.tanh())?, c_new)
                }
            };
            let live: Vec<bool> = (0..b).map(|bi| mask.data()[bi * t + step]).collect();
            outputs.push(h_new.select_rows(&live, zeros)?);
            h = h_new.select_rows(&live, h)?;
            if self.cell == CellKind::Lstm {
                c = c_new.select_rows(&live, c)?;
            }
        }
        if outputs.is_empty() {
            return Ok(scope.zeros(&[b, 0, h_size]));
        }
        Var::concat_last(&outputs)?.reshape(&[b, t, h_size])
    }
}

/// Row permutation reversing each sequence within its true length. It is its
/// own inverse.
pub(crate) fn reversal(mask: &Mask) -> Vec<usize> {
    let t = mask.last_dim();
    let mut rows = Vec::with_capacity(mask.data().len());
    for (bi, len) in mask.row_counts().into_iter().enumerate() {
        rows.extend((0..t).map(|ti| bi * t + if ti < len { len - 1 - ti } else { ti }));
    }
    rows
}

impl Seq2SeqEncoder for RecurrentEncoder {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.hidden_size * if self.backward.is_some() { 2 } else { 1 }
    }

    fn is_bidirectional(&self) -> bool {
        self.backward.is_some()
    }

    fn forward<'t>(&self, scope: Scope<'t>, x: Var<'t>, mask: &Mask) -> Result<Var<'t>, TensorError> {
        check_width(&x, self.input_dim, "recurrent")?;
        let fwd = self.run(scope, &self.forward, x, mask)?;
        let Some(bw) = &self.backward else { return Ok(fwd) };
        let (b, t, d) = check_mask(&x, mask, "recurrent")?;
        let perm = reversal(mask);
        let reversed = x.gather_rows(&perm, &[b, t, d])?;
        let out = self.run(scope, bw, reversed, mask)?.gather_rows(&perm, &[b, t, self.hidden_size])?;
        Var::concat_last(&[fwd, out])
    }
}

fn direction(
    ctx: &mut BuildContext<'_>,
    params: &Params,
    prefix: &str,
    cell: CellKind,
    input_dim: usize,
    hidden: usize,
) -> Result<DirectionWeights, ConfigurationError> {
    let g = cell.gates() * hidden;
    let input = weight(ctx, params, &format!("{prefix}.input_weight"), &[input_dim, g], input_dim)?;
    let hidden_w = weight(ctx, params, &format!("{prefix}.hidden_weight"), &[hidden, g], hidden)?;
    let b = bias(ctx, params, &format!("{prefix}.bias"), g)?;
    if cell == CellKind::Lstm {
        let values = ctx.params.value_mut(b).data_mut();
        values[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
    }
    Ok(DirectionWeights { input, hidden: hidden_w, bias: b })
}

fn build(cell: CellKind, params: &mut Params, ctx: &mut BuildContext<'_>) -> Result<Box<dyn Seq2SeqEncoder>, ConfigurationError> {
    let input_dim = positive(params, "input_dim", None)?;
    let hidden_size = positive(params, "hidden_size", None)?;
    let bidirectional = params.pop_bool("bidirectional", Some(false))?;
    let forward = direction(ctx, params, "forward", cell, input_dim, hidden_size)?;
    let backward = if bidirectional { Some(direction(ctx, params, "backward", cell, input_dim, hidden_size)?) } else { None };
    Ok(Box::new(RecurrentEncoder { cell, input_dim, hidden_size, forward, backward }))
}

fn rnn(params: &mut Params, ctx: &mut BuildContext<'_>) -> Result<Box<dyn Seq2SeqEncoder>, ConfigurationError> {
    build(CellKind::Rnn, params, ctx)
}

fn gru(params: &mut Params, ctx: &mut BuildContext<'_>) -> Result<Box<dyn Seq2SeqEncoder>, ConfigurationError> {
    build(CellKind::Gru, params, ctx)
}

fn lstm(params: &mut Params, ctx: &mut BuildContext<'_>) -> Result<Box<dyn Seq2SeqEncoder>, ConfigurationError> {
    build(CellKind::Lstm, params, ctx)
}

pub(super) fn register(registry: &mut Registry) -> Result<(), RegistrationError> {
    registry.register::<dyn Seq2SeqEncoder>("rnn", rnn)?;
    registry.register::<dyn Seq2SeqEncoder>("gru", gru)?;
    registry.register::<dyn Seq2SeqEncoder>("lstm", lstm)
}
