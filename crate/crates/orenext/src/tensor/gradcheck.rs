//! Central-difference gradient oracle.
//!
//! Every hand-written backward pass in the crate is validated against
//! [`finite_diff_grad`]. The oracle is deliberately simple: perturb one
//! coordinate at a time and take the symmetric difference quotient.

use crate::error::{Error, Result};

/// Outcome of comparing an analytic gradient against the numeric oracle.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest absolute difference over all parameters.
    pub max_abs_err: f64,
    /// Largest relative difference, where the denominator is
    /// `max(1, |analytic|, |numeric|)`.
    pub max_rel_err: f64,
    /// Per-parameter `(abs_err, rel_err)` in flattening order.
    pub per_param: Vec<(f64, f64)>,
    /// Step size used by the numeric oracle.
    pub h: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` per coordinate.
///
/// `f` may fail or return a non-finite value; both are reported as oracle
/// failures rather than silently producing NaN gradients.
pub fn finite_diff_grad(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    at: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    assert!(h > 0.0, "finite_diff_grad requires a positive step");
    let mut x = at.to_vec();
    let mut grad = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x)?;
        x[i] = orig - h;
        let down = f(&x)?;
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::config(format!(
                "finite_diff_grad: objective non-finite at coordinate {i}"
            )));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Compares analytic and numeric gradients elementwise.
pub fn compare_grads(analytic: &[f64], numeric: &[f64], h: f64) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths must match");
    let mut per_param = Vec::with_capacity(analytic.len());
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(1.0);
        per_param.push((abs, rel));
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(rel);
    }
    GradCheckReport { max_abs_err: max_abs, max_rel_err: max_rel, per_param, h }
}

/// Shorthand: the `max_rel_err` of [`compare_grads`].
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    compare_grads(analytic, numeric, 0.0).max_rel_err
}
