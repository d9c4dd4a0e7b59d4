use super::real::Real;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Probabilities are clamped into [P_CLAMP, 1 − P_CLAMP] before the logarithm.
pub const P_CLAMP: f64 = 1e-7;

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!(
            "{what}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean squared error over all elements and its gradient with respect to `pred`.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    same_shape(pred, target, "mse")?;
    let n = pred.len().max(1) as f64;
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p.f64() - t.f64();
        sum += d * d;
        grad.push(T::lit(2.0 * d / n));
    }
    Ok((sum / n, Tensor::new(pred.shape(), grad)?))
}

/// Binary cross-entropy −mean[y·ln p + (1−y)·ln(1−p)] and its gradient with
/// respect to `prob`. The gradient is evaluated at the clamped probability.
pub fn bce_loss<T: Real>(prob: &Tensor<T>, label: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    same_shape(prob, label, "bce")?;
    let n = prob.len().max(1) as f64;
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(prob.len());
    for (&p, &y) in prob.data().iter().zip(label.data()) {
        let p = p.f64().clamp(P_CLAMP, 1.0 - P_CLAMP);
        let y = y.f64();
        sum -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad.push(T::lit((-y / p + (1.0 - y) / (1.0 - p)) / n));
    }
    Ok((sum / n, Tensor::new(prob.shape(), grad)?))
}
