use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

/// Passes `grad_out` where `x > 0`; the subgradient at exactly zero is zero.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::dim(format!(
            "relu_backward: {:?} vs {:?}",
            x.shape(),
            grad_out.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::ZERO { g } else { T::ZERO })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Cross entropy `-sum(target * log_softmax(logits))` and its gradient
/// `softmax(logits) - target`.
pub fn softmax_xent(logits: &Tensor, target_dist: &Tensor) -> Result<(f64, Tensor)> {
    if logits.len() != target_dist.len() {
        return Err(Error::dim(format!(
            "logits {:?} vs target {:?}",
            logits.shape(),
            target_dist.shape()
        )));
    }
    let total: f64 = target_dist.data().iter().sum();
    if (total - 1.0).abs() > 1e-9 || target_dist.data().iter().any(|&t| t < 0.0) {
        return Err(Error::arg(format!(
            "target distribution must be non-negative and sum to 1 (sum = {total})"
        )));
    }
    let (loss, grad) = xent_with_grad(logits.data(), target_dist.data());
    Ok((loss, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Unchecked core of [`softmax_xent`], used on hot paths.
pub(crate) fn xent_with_grad(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let ls = log_softmax(logits);
    let loss = -target
        .iter()
        .zip(&ls)
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, l)| t * l)
        .sum::<f64>();
    let grad = ls.iter().zip(target).map(|(l, t)| l.exp() - t).collect();
    (loss, grad)
}
