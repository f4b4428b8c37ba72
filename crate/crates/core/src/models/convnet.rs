use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_batch, Classifier, Cotangent, LossFn};
use crate::error::{Error, Result};
use crate::tensor::{
    conv2d_backward_select, conv2d_forward, relu, relu_backward, Padding, Scalar, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub kh: usize,
    pub kw: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl ConvLayerSpec {
    pub const fn params(&self) -> usize {
        self.kh * self.kw * self.c_in * self.c_out
    }

    pub fn kernel_shape(&self) -> [usize; 4] {
        [self.kh, self.kw, self.c_in, self.c_out]
    }
}

/// The three bias-free convolutions. Followed by a 256 -> 10 dense layer.
pub const CONVNET_LAYERS: [ConvLayerSpec; 3] = [
    ConvLayerSpec { kh: 8, kw: 8, c_in: 3, c_out: 32, stride: 2, padding: Padding::Same },
    ConvLayerSpec { kh: 6, kw: 6, c_in: 32, c_out: 64, stride: 2, padding: Padding::Valid },
    ConvLayerSpec { kh: 5, kw: 5, c_in: 64, c_out: 64, stride: 1, padding: Padding::Valid },
];

pub const CONVNET_INPUT: [usize; 3] = [32, 32, 3];
const FLAT: usize = 256;
const CLASSES: usize = 10;
pub const CONVNET_PARAMS: usize = 6144 + 73_728 + 102_400 + FLAT * CLASSES;

/// Rows per internal chunk when a caller hands over a large batch.
const CHUNK: usize = 128;

/// All weights of a [`ConvNet`]: three kernels and the dense matrix
/// `[256, 10]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T: Scalar = f64> {
    pub conv: [Tensor<T>; 3],
    pub dense: Tensor<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn zeros() -> Self {
        let k = |i: usize| Tensor::zeros(&CONVNET_LAYERS[i].kernel_shape()).expect("static shape");
        Self {
            conv: [k(0), k(1), k(2)],
            dense: Tensor::zeros(&[FLAT, CLASSES]).expect("static shape"),
        }
    }

    pub fn tensors(&self) -> [&Tensor<T>; 4] {
        [&self.conv[0], &self.conv[1], &self.conv[2], &self.dense]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 4] {
        let [a, b, c] = &mut self.conv;
        [a, b, c, &mut self.dense]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn l1_norm(&self) -> f64 {
        self.tensors().iter().map(|t| t.l1_norm()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|t| t.l2_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    pub fn cast<U: Scalar>(&self) -> ConvParams<U> {
        ConvParams {
            conv: [self.conv[0].cast(), self.conv[1].cast(), self.conv[2].cast()],
            dense: self.dense.cast(),
        }
    }

    fn check_shapes(&self) -> Result<()> {
        for (i, (k, spec)) in self.conv.iter().zip(&CONVNET_LAYERS).enumerate() {
            if k.shape() != spec.kernel_shape() {
                return Err(Error::dim(format!(
                    "conv{} kernel {:?}, expected {:?}",
                    i + 1,
                    k.shape(),
                    spec.kernel_shape()
                )));
            }
        }
        if self.dense.shape() != [FLAT, CLASSES] {
            return Err(Error::dim(format!(
                "dense weights {:?}, expected [{FLAT}, {CLASSES}]",
                self.dense.shape()
            )));
        }
        Ok(())
    }
}

/// Bias-free CNN for 32x32x3 inputs:
/// conv 8x8/2 same -> relu -> conv 6x6/2 valid -> relu -> conv 5x5/1 valid
/// -> relu -> dense 256x10.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet<T: Scalar = f64> {
    params: ConvParams<T>,
}

/// Activations kept for the backward pass.
struct Cache<T: Scalar> {
    input: Tensor<T>,
    acts: [Tensor<T>; 3],
    logits: Tensor<T>,
}

/// Mean loss over a batch with parameter gradients; `input` holds the
/// gradient of the mean loss with respect to each input row when requested.
#[derive(Debug, Clone)]
pub struct ConvGrads<T: Scalar = f64> {
    pub loss: f64,
    pub correct: usize,
    pub params: ConvParams<T>,
    pub input: Option<Tensor<T>>,
}

impl<T: Scalar> ConvNet<T> {
    pub fn from_params(params: ConvParams<T>) -> Result<Self> {
        params.check_shapes()?;
        if !params.all_finite() {
            return Err(Error::NonFinite("convnet weights"));
        }
        Ok(Self { params })
    }

    pub fn zeros() -> Self {
        Self {
            params: ConvParams::zeros(),
        }
    }

    /// Glorot-uniform initialisation, fan-in/fan-out counted over the
    /// receptive field.
    pub fn glorot(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ConvParams::<T>::zeros();
        for (i, t) in params.tensors_mut().into_iter().enumerate() {
            let (fan_in, fan_out) = if i < 3 {
                let s = CONVNET_LAYERS[i];
                (s.kh * s.kw * s.c_in, s.kh * s.kw * s.c_out)
            } else {
                (FLAT, CLASSES)
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in t.data_mut() {
                *v = T::of(rng.random_range(-limit..limit));
            }
        }
        Self { params }
    }

    pub fn params(&self) -> &ConvParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ConvParams<T> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn cast<U: Scalar>(&self) -> ConvNet<U> {
        ConvNet {
            params: self.params.cast(),
        }
    }

    /// Multiply every weight by `lambda`. With four bias-free layers and
    /// positively homogeneous activations the logits scale by `lambda^4`.
    pub fn scale_all_weights(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::arg(format!("scale must be positive, got {lambda}")));
        }
        let mut out = self.clone();
        for t in out.params.tensors_mut() {
            *t = t.scale(T::of(lambda));
        }
        Ok(out)
    }

    /// Number of conv1 filters whose largest absolute weight is below `tau`.
    pub fn conv1_zero_filters(&self, tau: f64) -> usize {
        let k = &self.params.conv[0];
        let c_out = CONVNET_LAYERS[0].c_out;
        let mut max = vec![0.0f64; c_out];
        for (i, v) in k.data().iter().enumerate() {
            let m = &mut max[i % c_out];
            *m = m.max(v.f64().abs());
        }
        max.iter().filter(|&&m| m < tau).count()
    }

    fn as_images(xs: &Tensor<T>) -> Result<Tensor<T>> {
        let per: usize = CONVNET_INPUT.iter().product();
        if xs.rank() < 2 || xs.row_len() != per {
            return Err(Error::dim(format!(
                "convnet expects [n, 32, 32, 3] input, got {:?}",
                xs.shape()
            )));
        }
        let n = xs.outer();
        xs.clone().reshape(&[n, 32, 32, 3])
    }

    fn forward(&self, xs: &Tensor<T>) -> Result<Cache<T>> {
        let input = Self::as_images(xs)?;
        let n = input.outer();
        let mut h = input.clone();
        let mut acts = Vec::with_capacity(3);
        for (k, spec) in self.params.conv.iter().zip(&CONVNET_LAYERS) {
            let pre = conv2d_forward(&h, k, spec.stride, spec.padding)?;
            h = relu(&pre);
            acts.push(h.clone());
        }
        let flat = h.data();
        let z = crate::tensor::matmul(flat, self.params.dense.data(), n, FLAT, CLASSES);
        let acts: [Tensor<T>; 3] = acts.try_into().expect("three layers");
        Ok(Cache {
            input,
            acts,
            logits: Tensor::new(vec![n, CLASSES], z)?,
        })
    }

    fn backward(
        &self,
        cache: &Cache<T>,
        dlogits: &Tensor<T>,
        want_params: bool,
        want_input: bool,
    ) -> Result<(Option<ConvParams<T>>, Option<Tensor<T>>)> {
        let n = cache.logits.outer();
        let flat = cache.acts[2].data();
        let mut grads = want_params.then(ConvParams::<T>::zeros);
        if let Some(g) = grads.as_mut() {
            // flat^T [256, n] * dlogits [n, 10]
            T::gemm(
                FLAT, n, CLASSES, T::ONE, flat, 1, FLAT as isize, dlogits.data(), CLASSES as isize,
                1, T::ZERO, g.dense.data_mut(), CLASSES as isize, 1,
            );
        }
        // dlogits [n, 10] * dense^T [10, 256]
        let mut dflat = vec![T::ZERO; n * FLAT];
        T::gemm(
            n, CLASSES, FLAT, T::ONE, dlogits.data(), CLASSES as isize, 1,
            self.params.dense.data(), 1, CLASSES as isize, T::ZERO, &mut dflat, FLAT as isize, 1,
        );
        let mut dh = Tensor::new(cache.acts[2].shape().to_vec(), dflat)?;
        for layer in (0..3).rev() {
            let spec = CONVNET_LAYERS[layer];
            let dpre = relu_backward(&cache.acts[layer], &dh)?;
            let input = if layer == 0 { &cache.input } else { &cache.acts[layer - 1] };
            let need_input = layer > 0 || want_input;
            let (gi, gk) = conv2d_backward_select(
                input,
                &self.params.conv[layer],
                &dpre,
                spec.stride,
                spec.padding,
                need_input,
                want_params,
            )?;
            if let (Some(g), Some(gk)) = (grads.as_mut(), gk) {
                g.conv[layer] = gk;
            }
            match gi {
                Some(gi) => dh = gi,
                None => break,
            }
        }
        let input_grad = if want_input {
            Some(dh.reshape(&[n, CONVNET_INPUT.iter().product()])?)
        } else {
            None
        };
        Ok((grads, input_grad))
    }

    /// Logits `[n, 10]` in the working precision.
    pub fn logits_t(&self, xs: &Tensor<T>) -> Result<Tensor<T>> {
        let mut out = Vec::with_capacity(xs.outer() * CLASSES);
        for chunk in chunks(xs)? {
            out.extend_from_slice(self.forward(&chunk)?.logits.data());
        }
        Tensor::new(vec![xs.outer(), CLASSES], out)
    }

    /// Mean loss over the batch with parameter gradients (and optionally the
    /// gradient with respect to the inputs).
    pub fn loss_and_grads(
        &self,
        xs: &Tensor<T>,
        labels: &[usize],
        loss: LossFn,
        want_input: bool,
    ) -> Result<ConvGrads<T>> {
        let cache = self.forward(xs)?;
        let n = cache.logits.outer();
        if labels.len() != n {
            return Err(Error::dim(format!("{n} inputs but {} labels", labels.len())));
        }
        let mut total = 0.0;
        let mut correct = 0;
        let mut dz = Vec::with_capacity(n * CLASSES);
        let zf: Vec<f64> = cache.logits.data().iter().map(|v| v.f64()).collect();
        for (i, row) in zf.chunks_exact(CLASSES).enumerate() {
            if labels[i] >= CLASSES {
                return Err(Error::arg(format!("label {} out of range", labels[i])));
            }
            let (l, g) = loss.eval(row, labels[i]);
            if super::argmax(row) == labels[i] {
                correct += 1;
            }
            total += l;
            dz.extend(g.iter().map(|v| T::of(v / n as f64)));
        }
        let dz = Tensor::new(vec![n, CLASSES], dz)?;
        let (params, input) = self.backward(&cache, &dz, true, want_input)?;
        Ok(ConvGrads {
            loss: total / n as f64,
            correct,
            params: params.expect("requested"),
            input,
        })
    }
}

fn chunks<T: Scalar>(xs: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
    let n = xs.outer();
    if n <= CHUNK {
        return Ok(vec![xs.clone()]);
    }
    let row_shape = xs.shape()[1..].to_vec();
    (0..n)
        .step_by(CHUNK)
        .map(|s| {
            let e = (s + CHUNK).min(n);
            let mut shape = vec![e - s];
            shape.extend_from_slice(&row_shape);
            Tensor::new(shape, xs.data()[s * xs.row_len()..e * xs.row_len()].to_vec())
        })
        .collect()
}

impl<T: Scalar> Classifier for ConvNet<T> {
    fn input_shape(&self) -> Vec<usize> {
        CONVNET_INPUT.to_vec()
    }

    fn num_classes(&self) -> usize {
        CLASSES
    }

    fn logits(&self, xs: &Tensor) -> Result<Tensor> {
        check_batch(self, xs)?;
        Ok(self.logits_t(&xs.cast())?.cast())
    }

    fn backprop_input(&self, xs: &Tensor, cot: &mut Cotangent<'_>) -> Result<(Tensor, Tensor)> {
        let n = check_batch(self, xs)?;
        let mut logits = Vec::with_capacity(n * CLASSES);
        let mut grads = Vec::with_capacity(xs.len());
        let mut offset = 0;
        let mut c = vec![0.0; CLASSES];
        for chunk in chunks(&xs.cast::<T>())? {
            let cache = self.forward(&chunk)?;
            let m = chunk.outer();
            let mut dz = Vec::with_capacity(m * CLASSES);
            for (i, row) in cache.logits.data().chunks_exact(CLASSES).enumerate() {
                let z: Vec<f64> = row.iter().map(|v| v.f64()).collect();
                c.iter_mut().for_each(|v| *v = 0.0);
                cot(offset + i, &z, &mut c);
                dz.extend(c.iter().map(|&v| T::of(v)));
                logits.extend(z);
            }
            let dz = Tensor::new(vec![m, CLASSES], dz)?;
            let (_, gi) = self.backward(&cache, &dz, false, true)?;
            grads.extend(gi.expect("requested").data().iter().map(|v| v.f64()));
            offset += m;
        }
        Ok((
            Tensor::new(vec![n, CLASSES], logits)?,
            Tensor::new(vec![n, xs.row_len()], grads)?,
        ))
    }

    fn kind(&self) -> &'static str {
        "convnet"
    }
}
