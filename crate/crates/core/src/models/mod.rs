//! The two differentiable classifiers and the contract attacks are written
//! against.

mod convnet;
mod linear;
mod serialize;

pub use convnet::{ConvGrads, ConvLayerSpec, ConvNet, ConvParams, CONVNET_LAYERS, CONVNET_PARAMS};
pub use linear::{scaled_softplus, sigmoid, softplus, LinearGrads, LinearLogistic};
pub use serialize::{decode_model, encode_model, load_model, save_model, Model, ModelMeta, MODEL_MAGIC, MODEL_VERSION};

use crate::error::{Error, Result};
use crate::tensor::{log_softmax, softmax, Tensor};

/// Training/attack loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossFn {
    /// `softplus(-y (w.x + b))` for labels `y` in `{-1, +1}`.
    SoftplusBinary,
    /// Softmax cross entropy against a one-hot target mixed with the uniform
    /// distribution: `(1 - s) e_y + s / k`.
    SoftmaxXent { label_smoothing: f64 },
}

impl LossFn {
    pub fn xent(label_smoothing: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&label_smoothing) {
            return Err(Error::arg(format!(
                "label smoothing must be in [0, 1), got {label_smoothing}"
            )));
        }
        Ok(LossFn::SoftmaxXent { label_smoothing })
    }

    pub fn smoothing(&self) -> f64 {
        match self {
            LossFn::SoftplusBinary => 0.0,
            LossFn::SoftmaxXent { label_smoothing } => *label_smoothing,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            LossFn::SoftplusBinary => "softplus",
            LossFn::SoftmaxXent { .. } => "xent",
        }
    }

    /// Target distribution for class `label` out of `k`.
    pub fn target(&self, label: usize, k: usize) -> Vec<f64> {
        let s = self.smoothing();
        let mut t = vec![s / k as f64; k];
        t[label] += 1.0 - s;
        t
    }

    /// Loss and gradient with respect to the logits.
    pub fn eval(&self, logits: &[f64], label: usize) -> (f64, Vec<f64>) {
        let t = self.target(label, logits.len());
        crate::tensor::xent_with_grad(logits, &t)
    }
}

/// Callback choosing the logit cotangent for row `i` after seeing its logits.
pub type Cotangent<'a> = dyn FnMut(usize, &[f64], &mut [f64]) + 'a;

/// A differentiable classifier over flat inputs in `[0, 1]^d`.
///
/// Binary models expose two logits `(z/2, -z/2)` so that class 0 is
/// `y = +1` and softmax cross entropy coincides with the softplus loss.
pub trait Classifier: Send + Sync {
    /// Shape of one input example.
    fn input_shape(&self) -> Vec<usize>;

    fn num_classes(&self) -> usize;

    /// Logits `[n, k]` for a batch whose rows are flattened examples.
    fn logits(&self, xs: &Tensor) -> Result<Tensor>;

    /// Returns the logits and the input gradient of
    /// `sum_i <c_i, logits_i>`, where `cot(i, logits_i, c_i)` fills `c_i`.
    fn backprop_input(&self, xs: &Tensor, cot: &mut Cotangent<'_>) -> Result<(Tensor, Tensor)>;

    fn input_dim(&self) -> usize {
        self.input_shape().iter().product()
    }

    fn kind(&self) -> &'static str;
}

pub(crate) fn check_batch(model: &dyn Classifier, xs: &Tensor) -> Result<usize> {
    let d = model.input_dim();
    if xs.row_len() != d || xs.rank() < 2 {
        return Err(Error::dim(format!(
            "model expects rows of {d} features, got batch shape {:?}",
            xs.shape()
        )));
    }
    Ok(xs.outer())
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn predict_classes(model: &dyn Classifier, xs: &Tensor) -> Result<Vec<usize>> {
    let z = model.logits(xs)?;
    Ok(z.rows().map(argmax).collect())
}

pub fn softmax_rows(logits: &Tensor) -> Vec<Vec<f64>> {
    logits.rows().map(softmax).collect()
}

/// Per-example losses and input gradients.
pub fn loss_input_grad(
    model: &dyn Classifier,
    xs: &Tensor,
    labels: &[usize],
    loss: LossFn,
) -> Result<(Vec<f64>, Tensor)> {
    let n = check_batch(model, xs)?;
    if labels.len() != n {
        return Err(Error::dim(format!("{n} inputs but {} labels", labels.len())));
    }
    let k = model.num_classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::arg(format!("label {bad} out of range for {k} classes")));
    }
    let mut losses = vec![0.0; n];
    let (_, grad) = model.backprop_input(xs, &mut |i, z, c| {
        let (l, g) = loss.eval(z, labels[i]);
        losses[i] = l;
        c.copy_from_slice(&g);
    })?;
    Ok((losses, grad))
}

/// Per-example losses only.
pub fn losses(
    model: &dyn Classifier,
    xs: &Tensor,
    labels: &[usize],
    loss: LossFn,
) -> Result<Vec<f64>> {
    let z = model.logits(xs)?;
    Ok(z.rows()
        .zip(labels)
        .map(|(row, &l)| loss.eval(row, l).0)
        .collect())
}

/// Gradient of the softmax probability of `class` with respect to the input.
pub fn prob_input_grad(
    model: &dyn Classifier,
    xs: &Tensor,
    classes: &[usize],
) -> Result<(Vec<f64>, Tensor)> {
    let n = check_batch(model, xs)?;
    let mut probs = vec![0.0; n];
    let (_, grad) = model.backprop_input(xs, &mut |i, z, c| {
        let p = softmax(z);
        let y = classes[i];
        probs[i] = p[y];
        for (j, cj) in c.iter_mut().enumerate() {
            let e = if j == y { 1.0 } else { 0.0 };
            *cj = p[y] * (e - p[j]);
        }
    })?;
    Ok((probs, grad))
}

/// Jacobian of the logits for a single input, `[k, d]`.
pub fn logit_jacobian(model: &dyn Classifier, x: &[f64]) -> Result<(Vec<f64>, Tensor)> {
    let k = model.num_classes();
    let d = model.input_dim();
    if x.len() != d {
        return Err(Error::dim(format!("expected {d} features, got {}", x.len())));
    }
    let rows: Vec<&[f64]> = (0..k).map(|_| x).collect();
    let xs = Tensor::stack(&rows, &[d])?;
    let (z, jac) = model.backprop_input(&xs, &mut |i, _, c| {
        c.iter_mut().for_each(|v| *v = 0.0);
        c[i] = 1.0;
    })?;
    Ok((z.row(0).to_vec(), jac))
}

/// Log-probabilities for each row.
pub fn log_probs(logits: &Tensor) -> Vec<Vec<f64>> {
    logits.rows().map(log_softmax).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_target() {
        let l = LossFn::xent(0.1).unwrap();
        let t = l.target(2, 10);
        assert!((t[2] - 0.91).abs() < 1e-12);
        assert!((t[0] - 0.01).abs() < 1e-12);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(LossFn::xent(1.0).is_err());
    }

    #[test]
    fn argmax_first_wins_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
