use crate::error::{Error, Result};
use crate::numerics::tape::{Tape, Var};
use crate::numerics::Tensor;

/// Compares tape gradients of a scalar function against central finite
/// differences.
///
/// Returns `max_i |g_fd - g_tape| / max(1, |g_fd|)`. The caller keeps `x`
/// at least `eps` away from any surrogate discontinuity.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be > 0, got {eps}")));
    }
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let y = f(&mut tape, xv)?;
    let grads = tape.backward(y)?;
    let analytic = grads.get_or_zeros(xv, x.shape());

    let eval = |probe: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.param(probe);
        let out = f(&mut tape, v)?;
        let value = tape.value(out).data()[0];
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFinite("grad_check"))
        }
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let err = (fd - analytic.data()[i]).abs() / fd.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
