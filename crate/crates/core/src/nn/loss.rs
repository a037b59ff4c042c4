use super::tensor::Tensor3;
use crate::{Error, Result};

/// Mean absolute error and its gradient `sign(output - target) / n`, with
/// `sign(0) = 0`.
pub fn l1_loss_and_grad(output: &Tensor3, target: &Tensor3) -> Result<(f64, Tensor3)> {
    if output.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "output {:?} vs target {:?}",
            output.shape(),
            target.shape()
        )));
    }
    let mut grad = vec![0.0; output.data().len()];
    let loss = l1_raw(output.data(), target.data(), 1.0, &mut grad);
    let (h, w, c) = output.shape();
    Ok((loss, Tensor3::from_raw(h, w, c, grad)))
}

/// Writes `scale * sign(out - target) / n` into `grad` and returns the mean
/// absolute error.
pub(crate) fn l1_raw(output: &[f64], target: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
    let n = output.len() as f64;
    let step = scale / n;
    let mut total = 0.0;
    for ((g, o), t) in grad.iter_mut().zip(output).zip(target) {
        let d = o - t;
        total += d.abs();
        *g = if d > 0.0 {
            step
        } else if d < 0.0 {
            -step
        } else {
            0.0
        };
    }
    total / n
}
