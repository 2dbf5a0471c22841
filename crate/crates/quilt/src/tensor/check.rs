//! Central finite-difference gradient checking.

use super::{Tape, Tensor};
use crate::error::{Error, Result};

/// Compares the reverse-mode gradient of `f` at `point` against central
/// finite differences `(f(x+h) - f(x-h)) / 2h`, coordinate by coordinate,
/// and returns the largest relative error.
///
/// `f` must map a tensor to a scalar tensor. The relative error for a
/// coordinate is `|ad - fd| / max(|ad|, |fd|, 1e-6)`.
pub fn grad_check<F>(f: F, point: &[f64], shape: &[usize], step: f64) -> Result<f64>
where
    F: Fn(&Tape, &Tensor) -> Result<Tensor>,
{
    if !(1e-7..=1e-3).contains(&step) {
        return Err(Error::contract(format!(
            "grad_check step {step} outside [1e-7, 1e-3]"
        )));
    }

    let tape = Tape::new();
    let x = Tensor::param(shape, point.to_vec())?;
    let loss = f(&tape, &x)?;
    if !loss.is_scalar() {
        return Err(Error::contract(format!(
            "grad_check: function returned shape {:?}, expected a scalar",
            loss.shape()
        )));
    }
    if !loss.item().is_finite() {
        return Err(Error::OracleFailure(format!(
            "non-finite value {} at the base point",
            loss.item()
        )));
    }
    tape.backward(&loss)?;
    let analytic = x.grad().expect("parameter gradient present");

    let eval = |values: &[f64]| -> Result<f64> {
        let t = Tape::no_grad();
        let c = Tensor::new(shape, values.to_vec())?;
        let out = f(&t, &c)?;
        let v = out.item();
        if !v.is_finite() {
            return Err(Error::OracleFailure(format!(
                "non-finite value {v} at a perturbed point"
            )));
        }
        Ok(v)
    };

    let mut worst = 0.0_f64;
    let mut probe = point.to_vec();
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = eval(&probe)?;
        probe[i] = orig - step;
        let minus = eval(&probe)?;
        probe[i] = orig;

        let fd = (plus - minus) / (2.0 * step);
        let ad = analytic[i];
        let denom = ad.abs().max(fd.abs()).max(1e-6);
        worst = worst.max((ad - fd).abs() / denom);
    }
    Ok(worst)
}
