//! Finite-difference validation of analytic gradients.

use crate::error::{Error, Result};
use crate::nn::Param;

/// Anything exposing an ordered collection of named parameter tensors.
pub trait ParamAccess {
    fn num_tensors(&self) -> usize;
    fn tensor_name(&self, t: usize) -> String;
    fn tensor(&self, t: usize) -> &Param;
    fn tensor_mut(&mut self, t: usize) -> &mut Param;

    fn zero_grads(&mut self) {
        for t in 0..self.num_tensors() {
            self.tensor_mut(t).zero_grad();
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_tensor: String,
    pub worst_coord: usize,
    pub coords_checked: usize,
}

/// Compares the analytic gradient to the central difference
/// `(f(θ+eps) − f(θ−eps)) / (2·eps)` for every coordinate.
///
/// `loss_fn(model, with_grad)` must return the loss; when `with_grad` is
/// true it must also accumulate gradients into the model's params. The
/// closure is responsible for being deterministic across calls (dropout
/// disabled, or its rng reseeded identically on every evaluation).
///
/// Per-coordinate relative error is
/// `|analytic − numeric| / max(1e-8, |analytic| + |numeric|)`; the report
/// carries the maximum.
pub fn grad_check<M, F>(model: &mut M, mut loss_fn: F, eps: f64) -> Result<GradCheckReport>
where
    M: ParamAccess,
    F: FnMut(&mut M, bool) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Config(format!("grad_check eps {eps} outside [1e-7, 1e-3]")));
    }

    model.zero_grads();
    let base = loss_fn(model, true)?;
    if !base.is_finite() {
        return Err(Error::Numeric(format!("grad_check: non-finite loss {base}")));
    }
    let analytic: Vec<Vec<f64>> = (0..model.num_tensors())
        .map(|t| model.tensor(t).grad.data().to_vec())
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_tensor: String::new(),
        worst_coord: 0,
        coords_checked: 0,
    };

    for t in 0..model.num_tensors() {
        for i in 0..model.tensor(t).len() {
            let orig = model.tensor(t).value.data()[i];

            model.tensor_mut(t).value.data_mut()[i] = orig + eps;
            let plus = loss_fn(model, false)?;
            model.tensor_mut(t).value.data_mut()[i] = orig - eps;
            let minus = loss_fn(model, false)?;
            model.tensor_mut(t).value.data_mut()[i] = orig;

            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!(
                    "grad_check: non-finite loss at tensor {t} coord {i}"
                )));
            }

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[t][i];
            let rel = (a - numeric).abs() / f64::max(1e-8, a.abs() + numeric.abs());
            report.coords_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_tensor = model.tensor_name(t);
                report.worst_coord = i;
            }
        }
    }
    Ok(report)
}
