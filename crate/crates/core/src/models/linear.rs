use super::{check_batch, Classifier, Cotangent};
use crate::data::BinaryView;
use crate::error::{Error, Result};
use crate::tensor::{dot, Tensor};

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^{-s z})`: the logistic loss of a margin `z` measured in units of
/// distance, with `s` playing the role of the weight norm.
pub fn scaled_softplus(z: f64, s: f64) -> f64 {
    softplus(-s * z)
}

/// Logistic regression `p(y = +1 | x) = sigmoid(w.x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLogistic {
    w: Tensor,
    b: f64,
}

/// Loss and gradients for one example or a batch (mean over the batch).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub loss: f64,
    pub w: Vec<f64>,
    pub b: f64,
    /// Per-example input gradients, row-major `[n, d]`.
    pub input: Vec<f64>,
}

impl LinearLogistic {
    pub fn new(w: Tensor, b: f64) -> Result<Self> {
        if w.rank() != 1 {
            return Err(Error::dim(format!("weights must be a vector, got {:?}", w.shape())));
        }
        w.ensure_finite("linear weights")?;
        if !b.is_finite() {
            return Err(Error::NonFinite("linear bias"));
        }
        Ok(Self { w, b })
    }

    pub fn zeros(d: usize) -> Result<Self> {
        Self::new(Tensor::zeros(&[d])?, 0.0)
    }

    /// `w = mean(x | y = +1) - mean(x | y = -1)`, `b = 0`.
    pub fn expert_init(view: &BinaryView) -> Result<Self> {
        let pos = view.class_mean(1.0)?;
        let neg = view.class_mean(-1.0)?;
        let w = pos.iter().zip(&neg).map(|(a, b)| a - b).collect();
        Self::new(Tensor::from_vec(w)?, 0.0)
    }

    pub fn w(&self) -> &Tensor {
        &self.w
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn set_params(&mut self, w: &[f64], b: f64) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::dim(format!("{} weights for a {}-d model", w.len(), self.dim())));
        }
        self.w.data_mut().copy_from_slice(w);
        self.b = b;
        self.w.ensure_finite("linear weights")?;
        if !b.is_finite() {
            return Err(Error::NonFinite("linear bias"));
        }
        Ok(())
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::dim(format!(
                "model has {} weights, input has {} features",
                self.dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// `w.x + b`.
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        Ok(dot(self.w.data(), x) + self.b)
    }

    /// `+1.0` if the logit is positive, else `-1.0`.
    pub fn predict_sign(&self, x: &[f64]) -> Result<f64> {
        Ok(if self.logit(x)? > 0.0 { 1.0 } else { -1.0 })
    }

    /// `(w.x + b) / ||w||_2`.
    pub fn signed_distance(&self, x: &[f64]) -> Result<f64> {
        let norm = self.w.l2_norm();
        if norm == 0.0 {
            return Err(Error::ZeroWeights);
        }
        Ok(self.logit(x)? / norm)
    }

    /// Softplus loss `ln(1 + e^{-y(w.x + b)})` with parameter and input
    /// gradients for a single example.
    pub fn loss_and_grads(&self, x: &[f64], y: f64) -> Result<LinearGrads> {
        check_label(y)?;
        let z = self.logit(x)?;
        let m = y * z;
        // d loss / d z = -y sigmoid(-y z)
        let c = -y * sigmoid(-m);
        Ok(LinearGrads {
            loss: softplus(-m),
            w: x.iter().map(|v| c * v).collect(),
            b: c,
            input: self.w.data().iter().map(|w| c * w).collect(),
        })
    }

    /// Mean loss and parameter gradients over a batch. Input gradients are
    /// returned per example.
    pub fn batch_loss_and_grads(&self, xs: &Tensor, ys: &[f64]) -> Result<LinearGrads> {
        let d = self.dim();
        if xs.row_len() != d || xs.outer() != ys.len() || ys.is_empty() {
            return Err(Error::dim(format!(
                "batch {:?} with {} labels for a {d}-d model",
                xs.shape(),
                ys.len()
            )));
        }
        let n = ys.len() as f64;
        let mut loss = 0.0;
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        let mut input = Vec::with_capacity(xs.len());
        for (x, &y) in xs.rows().zip(ys) {
            check_label(y)?;
            let m = y * (dot(self.w.data(), x) + self.b);
            let c = -y * sigmoid(-m);
            loss += softplus(-m);
            for (g, v) in gw.iter_mut().zip(x) {
                *g += c * v;
            }
            gb += c;
            input.extend(self.w.data().iter().map(|w| c * w));
        }
        gw.iter_mut().for_each(|g| *g /= n);
        Ok(LinearGrads {
            loss: loss / n,
            w: gw,
            b: gb / n,
            input,
        })
    }

    pub fn error_rate(&self, view: &BinaryView) -> Result<f64> {
        let mut wrong = 0usize;
        for (x, &y) in view.images().rows().zip(view.y()) {
            if self.predict_sign(x)? != y {
                wrong += 1;
            }
        }
        Ok(wrong as f64 / view.len() as f64)
    }

    /// Scale weights and bias together (same decision boundary).
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.w.scale(s), self.b * s)
    }
}

fn check_label(y: f64) -> Result<()> {
    if y != 1.0 && y != -1.0 {
        return Err(Error::arg(format!("binary label must be +1 or -1, got {y}")));
    }
    Ok(())
}

impl Classifier for LinearLogistic {
    fn input_shape(&self) -> Vec<usize> {
        vec![self.dim()]
    }

    fn num_classes(&self) -> usize {
        2
    }

    fn logits(&self, xs: &Tensor) -> Result<Tensor> {
        let n = check_batch(self, xs)?;
        let mut out = Vec::with_capacity(2 * n);
        for x in xs.rows() {
            let z = dot(self.w.data(), x) + self.b;
            out.push(0.5 * z);
            out.push(-0.5 * z);
        }
        Tensor::new(vec![n, 2], out)
    }

    fn backprop_input(&self, xs: &Tensor, cot: &mut Cotangent<'_>) -> Result<(Tensor, Tensor)> {
        let logits = self.logits(xs)?;
        let d = self.dim();
        let mut grad = Vec::with_capacity(xs.len());
        let mut c = [0.0; 2];
        for (i, z) in logits.rows().enumerate() {
            cot(i, z, &mut c);
            let s = 0.5 * (c[0] - c[1]);
            grad.extend(self.w.data().iter().map(|w| s * w));
        }
        let mut shape = vec![logits.outer()];
        shape.push(d);
        Ok((logits, Tensor::new(shape, grad)?))
    }

    fn kind(&self) -> &'static str {
        "linear"
    }
}
