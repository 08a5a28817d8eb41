use super::{Tape, Var};
use crate::{Result, Tensor};

/// Default central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Compares reverse-mode gradients of `f` at `x` with central finite
/// differences and returns the largest relative error
/// `|g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)` over all coordinates.
pub fn gradient_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let loss = f(&mut tape, xv)?;
    let analytic = tape.backward(loss)?.get_or_zeros(xv, x.shape());

    let eval = |point: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.leaf(point);
        let out = f(&mut tape, v)?;
        Ok(tape.value(out).item())
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * h);
        let ad = analytic.data()[i];
        let rel = (ad - fd).abs() / (ad.abs() + fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
