use super::{check_layouts, GradientVector, ParameterVector};
use crate::error::{Error, Result};

/// Magnitudes below this are compared absolutely; central differences
/// carry roughly 1e-10 of rounding noise at eps = 1e-5.
const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Central-difference gradient estimate, one coordinate at a time.
pub fn finite_difference_grad<F>(
    params: &ParameterVector,
    eps: f64,
    mut loss_fn: F,
) -> Result<GradientVector>
where
    F: FnMut(&ParameterVector) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let mut probe = params.clone();
    let mut out = GradientVector::zeros(params.layout().clone());
    for i in 0..params.len() {
        let orig = probe.values()[i];
        probe.values_mut()[i] = orig + eps;
        let plus = loss_fn(&probe);
        probe.values_mut()[i] = orig - eps;
        let minus = loss_fn(&probe);
        probe.values_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteLoss { index: i });
        }
        out.values_mut()[i] = (plus - minus) / (2.0 * eps);
    }
    Ok(out)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Largest per-coordinate [`relative_error`] between two gradients.
pub fn max_relative_error(analytic: &GradientVector, numeric: &GradientVector) -> Result<f64> {
    check_layouts(analytic.layout(), numeric.layout())?;
    Ok(analytic
        .values()
        .iter()
        .zip(numeric.values())
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max))
}
