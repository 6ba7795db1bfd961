//! Central finite-difference gradient verification.
//!
//! The numeric side only ever evaluates the forward function, so it stays
//! independent of the reverse pass it is used to check.

use super::Tensor;

/// Step used by the checks throughout the crate.
pub const STEP: f64 = 1e-5;

/// Magnitudes below this are compared absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Central differences of `f` with respect to every entry of every input.
pub fn numeric_gradients<F>(inputs: &[Tensor], step: f64, mut f: F) -> Vec<Tensor>
where
    F: FnMut(&[Tensor]) -> f64,
{
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let mut grad = Tensor::zeros(inputs[t].shape());
        for i in 0..inputs[t].len() {
            let orig = work[t].data()[i];
            work[t].data_mut()[i] = orig + step;
            let plus = f(&work);
            work[t].data_mut()[i] = orig - step;
            let minus = f(&work);
            work[t].data_mut()[i] = orig;
            grad.data_mut()[i] = (plus - minus) / (2.0 * step);
        }
        out.push(grad);
    }
    out
}

/// Largest [`relative_error`] across paired gradient tensors.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()))
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}
