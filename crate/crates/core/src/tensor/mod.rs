//! Dense 64-bit tensors and a define-by-run reverse-mode differentiation tape.
//!
//! A [`Tape`] is created per forward pass. Operations on [`Var`] handles
//! append nodes to it; [`Tape::backward`] walks the nodes in reverse append
//! order and returns [`Gradients`]. Model parameters live outside the tape in
//! a [`ParamStore`] and enter it as leaves through [`Tape::param`].

mod ops;
mod store;
mod tape;

use std::fmt;

pub use ops::PoolKind;
pub use store::{init_uniform, ParamId, ParamStore};
pub use tape::{Gradients, Scope, Tape, Var};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("{op}: invalid shape {shape:?}, expected {expected}")]
    InvalidShape { op: &'static str, shape: Vec<usize>, expected: String },
    #[error("{op}: index {index} out of range for size {bound}")]
    IndexOutOfRange { op: &'static str, index: usize, bound: usize },
    #[error("{op}: row {row} has no unmasked entries")]
    EmptyMaskRow { op: &'static str, row: usize },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("parameter '{0}' is already registered")]
    DuplicateParameter(String),
    #[error("shape {shape:?} holds {expected} elements but {len} were given")]
    DataLength { shape: Vec<usize>, expected: usize, len: usize },
}

/// A dense row-major array of `f64`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected = shape.iter().product::<usize>();
        if expected != data.len() {
            return Err(TensorError::DataLength { shape, expected, len: data.len() });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: Vec::new(), data: vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Size of the last dimension (1 for scalars).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// Element at a multi-index.
    pub fn at(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len());
        let mut flat = 0;
        for (i, (&ix, &dim)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < dim, "index {ix} out of range for axis {i} of size {dim}");
            flat = flat * dim + ix;
        }
        self.data[flat]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, TensorError> {
        let expected = shape.iter().product::<usize>();
        if expected != self.data.len() {
            return Err(TensorError::DataLength { shape: shape.to_vec(), expected, len: self.data.len() });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor").field("shape", &self.shape).field("data", &self.data).finish()
    }
}

/// A {0,1} array marking real (true) versus padded (false) positions.
#[derive(Clone, PartialEq, Eq)]
pub struct Mask {
    shape: Vec<usize>,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(shape: Vec<usize>, data: Vec<bool>) -> Result<Self, TensorError> {
        let expected = shape.iter().product::<usize>();
        if expected != data.len() {
            return Err(TensorError::DataLength { shape, expected, len: data.len() });
        }
        Ok(Mask { shape, data })
    }

    pub fn ones(shape: &[usize]) -> Self {
        Mask { shape: shape.to_vec(), data: vec![true; shape.iter().product()] }
    }

    /// `[B, max_len]` mask with the first `lengths[b]` entries of row `b` set.
    pub fn from_lengths(lengths: &[usize], max_len: usize) -> Self {
        let mut data = Vec::with_capacity(lengths.len() * max_len);
        for &len in lengths {
            data.extend((0..max_len).map(|t| t < len));
        }
        Mask { shape: vec![lengths.len(), max_len], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Number of set entries in each row along the last axis.
    pub fn row_counts(&self) -> Vec<usize> {
        self.data.chunks(self.last_dim().max(1)).map(|row| row.iter().filter(|&&m| m).count()).collect()
    }

    /// Values of the mask as 0.0 / 1.0.
    pub fn to_tensor(&self) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect() }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, TensorError> {
        let expected = shape.iter().product::<usize>();
        if expected != self.data.len() {
            return Err(TensorError::DataLength { shape: shape.to_vec(), expected, len: self.data.len() });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bits: String = self.data.iter().map(|&m| if m { '1' } else { '0' }).collect();
        f.debug_struct("Mask").field("shape", &self.shape).field("bits", &bits).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert_eq!(Tensor::new(vec![2, 3], vec![0.0; 5]).unwrap_err(), TensorError::DataLength { shape: vec![2, 3], expected: 6, len: 5 });
        assert!(Mask::new(vec![2], vec![true]).is_err());
        assert!(Tensor::zeros(&[2]).reshape(&[3]).is_err());
        assert!(Mask::ones(&[2]).reshape(&[3]).is_err());
    }

    #[test]
    fn indexing_and_accessors() {
        let t = Tensor::new(vec![2, 3], (0..6).map(f64::from).collect()).unwrap();
        assert_eq!(t.at(&[1, 2]), 5.0);
        assert_eq!(t.rank(), 2);
        assert_eq!(t.last_dim(), 3);
        assert_eq!(Tensor::scalar(4.0).item(), 4.0);
        assert_eq!(Tensor::scalar(4.0).last_dim(), 1);
        let r = t.clone().reshape(&[3, 2]).unwrap();
        assert_eq!(r.shape(), &[3, 2]);
        assert_eq!(r.max_abs_diff(&Tensor::full(&[3, 2], 1.0)), 4.0);
        assert!(t.is_finite());
        assert!(format!("{t:?}").contains("shape: [2, 3]"));
    }

    #[test]
    fn masks_from_lengths() {
        let m = Mask::from_lengths(&[2, 0, 3], 3);
        assert_eq!(m.row_counts(), vec![2, 0, 3]);
        assert_eq!(m.to_tensor().data(), &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(format!("{m:?}"), "Mask { shape: [3, 3], bits: \"110000111\" }");
        assert_eq!(m.clone().reshape(&[9, 1]).unwrap().last_dim(), 1);
    }
}
