use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

use super::ops::{self, Op};
use super::{ParamId, ParamStore, Tensor, TensorError};

struct Node {
    value: Rc<Tensor>,
    op: Op,
    inputs: Vec<usize>,
    param: Option<ParamId>,
}

/// Append-only record of a forward computation.
///
/// Inputs of a node always precede it, so append order is a topological
/// order. A tape is confined to one thread and rebuilt for every forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    param_leaves: RefCell<BTreeMap<ParamId, usize>>,
}

/// A value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.shape()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a constant or input tensor.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, Vec::new())
    }

    /// Brings a stored parameter onto the tape. Repeated calls for the same
    /// parameter return the same node.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        if let Some(&node) = self.param_leaves.borrow().get(&id) {
            return Var { tape: self, id: node };
        }
        let var = self.push(store.value(id).clone(), Op::Leaf, Vec::new());
        self.nodes.borrow_mut()[var.id].param = Some(id);
        self.param_leaves.borrow_mut().insert(id, var.id);
        var
    }

    pub(crate) fn push(&self, value: Tensor, op: Op, inputs: Vec<usize>) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        if cfg!(debug_assertions) && inputs.iter().all(|&i| nodes[i].value.is_finite()) {
            debug_assert!(value.is_finite(), "{op:?} produced a non-finite value from finite inputs");
        }
        let id = nodes.len();
        nodes.push(Node { value: Rc::new(value), op, inputs, param: None });
        Var { tape: self, id }
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, TensorError> {
        assert!(std::ptr::eq(loss.tape, self), "loss belongs to a different tape");
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(TensorError::NonScalarLoss { shape: root.value.shape().to_vec() });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::full(root.value.shape(), 1.0));
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.inputs.is_empty() {
                let inputs: Vec<Rc<Tensor>> = node.inputs.iter().map(|&i| Rc::clone(&nodes[i].value)).collect();
                let input_grads = ops::backward(&node.op, &inputs, &node.value, &g);
                for (&input, ig) in node.inputs.iter().zip(input_grads) {
                    let Some(ig) = ig else { continue };
                    match &mut grads[input] {
                        Some(acc) => acc.data_mut().iter_mut().zip(ig.data()).for_each(|(a, b)| *a += b),
                        slot @ None => *slot = Some(ig),
                    }
                }
            }
            grads[id] = Some(g);
        }
        let params = self.param_leaves.borrow().iter().map(|(&p, &n)| (p, n)).collect();
        Ok(Gradients { grads, params })
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if `var` influenced it.
    pub fn wrt(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id)?.as_ref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        let &(_, node) = self.params.iter().find(|(p, _)| *p == id)?;
        self.grads[node].as_ref()
    }

    /// Adds every parameter gradient into the store's gradient buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for &(id, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                store.accumulate_grad(id, g);
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn concat_last(parts: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
        ops::concat_last(parts)
    }
}

/// A tape paired with the parameters a forward pass reads from.
#[derive(Clone, Copy)]
pub struct Scope<'t> {
    pub tape: &'t Tape,
    pub params: &'t ParamStore,
}

impl<'t> Scope<'t> {
    pub fn new(tape: &'t Tape, params: &'t ParamStore) -> Self {
        Scope { tape, params }
    }

    pub fn param(&self, id: ParamId) -> Var<'t> {
        self.tape.param(self.params, id)
    }

    pub fn constant(&self, value: Tensor) -> Var<'t> {
        self.tape.leaf(value)
    }

    pub fn zeros(&self, shape: &[usize]) -> Var<'t> {
        self.tape.leaf(Tensor::zeros(shape))
    }
}
