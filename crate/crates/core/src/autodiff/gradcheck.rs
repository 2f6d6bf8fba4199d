use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Result, SanError};

/// Compares the tape gradient of the scalar `f(x)` against central
/// differences and returns the largest relative error over coordinates,
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn finite_diff_check<'a, F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape<'a>, Var) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(SanError::contract(format!("finite difference step must be positive, got {step}")));
    }
    let eval = |point: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.constant(point);
        let out = f(&mut tape, v)?;
        scalar_value(&tape, out)
    };

    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), true);
    let out = f(&mut tape, xv)?;
    scalar_value(&tape, out)?;
    tape.backward(out)?;
    let analytic = tape.grad(xv).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));

    let mut worst: f64 = 0.0;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += step;
        let mut minus = x.clone();
        minus.data_mut()[i] -= step;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * step);
        if !numeric.is_finite() {
            return Err(SanError::Numeric { op: "finite_diff_check" });
        }
        let a = analytic.data()[i];
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn scalar_value(tape: &Tape<'_>, out: Var) -> Result<f64> {
    let t = tape.value(out);
    if t.numel() != 1 {
        return Err(SanError::contract(format!("checked function must return a scalar, got {:?}", t.shape())));
    }
    Ok(t.item())
}
