//! Dense double-precision tensors with reverse-mode differentiation.
//!
//! The engine is deliberately small: a [`Tensor`] is a shared handle to a
//! row-major `f64` buffer, and a [`Tape`] records the kernels executed on it
//! so that [`Tape::backward`] can replay them in reverse. The kernel set is
//! exactly what the model and losses need; there is no broadcasting, no
//! views, and no implicit type promotion.
//!
//! Determinism is part of the contract: every reduction runs left-to-right in
//! row-major order, so identical inputs give bit-identical outputs.

mod check;
mod tape;

pub use check::grad_check;
pub use tape::Tape;

use crate::error::{Error, Result};
use std::cell::{Ref, RefCell};
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

static NEXT_ID: AtomicUsize = AtomicUsize::new(1);

pub(crate) struct TensorData {
    pub(crate) shape: Vec<usize>,
    pub(crate) values: Vec<f64>,
    pub(crate) grad: Option<Vec<f64>>,
    pub(crate) requires_grad: bool,
}

/// Shared handle to a dense tensor.
///
/// Cloning a `Tensor` clones the handle, not the buffer; parameters stay
/// alive across tapes while intermediate results are dropped with the tape
/// that produced them.
#[derive(Clone)]
pub struct Tensor {
    pub(crate) data: Rc<RefCell<TensorData>>,
    pub(crate) id: usize,
}

fn check_shape(shape: &[usize], len: usize) -> Result<()> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(Error::contract(format!(
            "tensor shape must have positive dimensions, got {shape:?}"
        )));
    }
    let expected: usize = shape.iter().product();
    if expected != len {
        return Err(Error::contract(format!(
            "shape {shape:?} holds {expected} values, {len} provided"
        )));
    }
    Ok(())
}

impl Tensor {
    fn build(shape: Vec<usize>, values: Vec<f64>, requires_grad: bool) -> Result<Tensor> {
        check_shape(&shape, values.len())?;
        let grad = requires_grad.then(|| vec![0.0; values.len()]);
        Ok(Tensor {
            data: Rc::new(RefCell::new(TensorData {
                shape,
                values,
                grad,
                requires_grad,
            })),
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        })
    }

    /// A constant (non-differentiable) tensor.
    pub fn new(shape: &[usize], values: Vec<f64>) -> Result<Tensor> {
        Tensor::build(shape.to_vec(), values, false)
    }

    /// A trainable parameter: gradients accumulate into it until
    /// [`Tensor::zero_grad`] is called.
    pub fn param(shape: &[usize], values: Vec<f64>) -> Result<Tensor> {
        Tensor::build(shape.to_vec(), values, true)
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::build(vec![1], vec![v], false).expect("scalar shape is valid")
    }

    pub fn filled(shape: &[usize], v: f64) -> Result<Tensor> {
        let len = shape.iter().product();
        Tensor::build(shape.to_vec(), vec![v; len], false)
    }

    pub fn zeros(shape: &[usize]) -> Result<Tensor> {
        Tensor::filled(shape, 0.0)
    }

    pub(crate) fn output(shape: Vec<usize>, values: Vec<f64>, requires_grad: bool) -> Tensor {
        Tensor::build(shape, values, requires_grad).expect("kernel produced a valid shape")
    }

    pub fn shape(&self) -> Vec<usize> {
        self.data.borrow().shape.clone()
    }

    pub fn len(&self) -> usize {
        self.data.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // shapes have positive dimensions by construction
    }

    pub fn is_scalar(&self) -> bool {
        self.len() == 1
    }

    pub fn requires_grad(&self) -> bool {
        self.data.borrow().requires_grad
    }

    /// Borrows the values in row-major order.
    pub fn values(&self) -> Ref<'_, [f64]> {
        Ref::map(self.data.borrow(), |d| d.values.as_slice())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.borrow().values.clone()
    }

    /// The single value of a scalar tensor.
    pub fn item(&self) -> f64 {
        let d = self.data.borrow();
        debug_assert_eq!(d.values.len(), 1, "item() on non-scalar tensor");
        d.values[0]
    }

    /// Accumulated gradient, if this tensor participates in differentiation.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.data.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        if let Some(g) = self.data.borrow_mut().grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Overwrites the values in place (used by the optimizer).
    pub fn set_values(&self, values: &[f64]) {
        let mut d = self.data.borrow_mut();
        assert_eq!(d.values.len(), values.len(), "set_values length mismatch");
        d.values.copy_from_slice(values);
    }

    pub(crate) fn add_to_grad(&self, delta: &[f64]) {
        let mut d = self.data.borrow_mut();
        let g = d.grad.get_or_insert_with(|| vec![0.0; delta.len()]);
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    /// True if every stored value is finite.
    pub fn all_finite(&self) -> bool {
        self.data.borrow().values.iter().all(|v| v.is_finite())
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let d = self.data.borrow();
        write!(
            f,
            "Tensor(shape={:?}, requires_grad={}",
            d.shape, d.requires_grad
        )?;
        if d.values.len() <= 8 {
            write!(f, ", values={:?})", d.values)
        } else {
            write!(f, ", values=[{} elems])", d.values.len())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_value_count() {
        assert!(Tensor::new(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(&[0], vec![]).is_err());
    }

    #[test]
    fn params_start_with_zero_grad() {
        let p = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        assert_eq!(p.grad(), Some(vec![0.0, 0.0]));
        let c = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        assert_eq!(c.grad(), None);
    }

    #[test]
    fn zero_grad_clears_accumulation() {
        let p = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        p.add_to_grad(&[3.0, 4.0]);
        p.add_to_grad(&[1.0, 1.0]);
        assert_eq!(p.grad(), Some(vec![4.0, 5.0]));
        p.zero_grad();
        assert_eq!(p.grad(), Some(vec![0.0, 0.0]));
    }
}
