//! Central finite-difference verification of analytic gradients.

use super::{NumericsError, Parameter};

/// A differentiable scalar function with explicit parameter storage.
///
/// `params` must return the same tensors in the same order on every call;
/// `loss` evaluates the function at the current parameter values, and
/// `loss_and_grad` additionally accumulates analytic gradients into each
/// parameter's `grad` buffer.
pub trait Differentiable {
    fn params(&mut self) -> Vec<&mut Parameter>;
    fn loss(&mut self) -> Result<f64, NumericsError>;
    fn loss_and_grad(&mut self) -> Result<f64, NumericsError>;
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter index, coordinate) of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub coordinates_checked: usize,
}

/// Compares analytic gradients against central differences
/// `(f(p + h) - f(p - h)) / 2h`, coordinate by coordinate.
///
/// The relative error uses the denominator `max(|analytic|, |numeric|, 1e-8)`
/// and the maximum over all coordinates is returned.
pub fn grad_check<T: Differentiable>(
    target: &mut T,
    h: f64,
) -> Result<GradCheckReport, NumericsError> {
    for p in target.params() {
        p.zero_grad();
    }
    let base = target.loss_and_grad()?;
    if !base.is_finite() {
        return Err(NumericsError::NonFiniteValue);
    }
    let analytic: Vec<Vec<f64>> = target
        .params()
        .iter()
        .map(|p| p.grad.data().to_vec())
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates_checked: 0,
    };

    for (pi, grads) in analytic.iter().enumerate() {
        for (ci, &a) in grads.iter().enumerate() {
            let original = target.params()[pi].value.data()[ci];

            target.params()[pi].value.data_mut()[ci] = original + h;
            let plus = target.loss()?;
            target.params()[pi].value.data_mut()[ci] = original - h;
            let minus = target.loss()?;
            target.params()[pi].value.data_mut()[ci] = original;

            if !plus.is_finite() || !minus.is_finite() {
                return Err(NumericsError::NonFiniteValue);
            }
            let numeric = (plus - minus) / (2.0 * h);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.coordinates_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((pi, ci));
            }
        }
    }
    Ok(report)
}
