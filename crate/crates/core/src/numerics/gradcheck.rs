use super::ParameterSet;
use crate::error::{invalid, Error, Result};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference gradient `(L(p + h·e_i) - L(p - h·e_i)) / 2h` for every
/// coordinate of `params`.
pub fn finite_difference_gradient<F>(loss: F, params: &ParameterSet, step: f64) -> Result<ParameterSet>
where
    F: Fn(&ParameterSet) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(invalid("finite-difference step must be positive"));
    }
    let mut grad = params.zeros_like();
    let mut probe = params.clone();
    for i in 0..params.total_dim() {
        let base = params.get_flat(i);
        probe.set_flat(i, base + step);
        let up = loss(&probe)?;
        probe.set_flat(i, base - step);
        let down = loss(&probe)?;
        probe.set_flat(i, base);
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss at coordinate {i}")));
        }
        grad.set_flat(i, (up - down) / (2.0 * step));
    }
    Ok(grad)
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, or the absolute difference norm when both are
/// below `1e-12`.
pub fn relative_error(a: &ParameterSet, b: &ParameterSet) -> f64 {
    let mut diff = a.clone();
    diff.add_scaled(-1.0, b);
    let scale = a.norm().max(b.norm());
    if scale < 1e-12 {
        diff.norm()
    } else {
        diff.norm() / scale
    }
}
