//! 2-D cross-correlation over `h x w x c` images (optionally batched as
//! `n x h x w x c`) with `kh x kw x c_in x c_out` kernels and no bias.
//!
//! Implemented as im2col followed by a GEMM, so the kernel layout
//! `[kh, kw, c_in, c_out]` is already the `[K, c_out]` right-hand matrix.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output extent `ceil(in / stride)`. An odd total pad puts the extra
    /// pixel on the bottom/right.
    Same,
    /// No padding; output extent `floor((in - k) / stride) + 1`.
    Valid,
}

/// Resolved geometry for one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub c_in: usize,
    pub kh: usize,
    pub kw: usize,
    pub c_out: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    /// Rows of the im2col matrix.
    pub fn m(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }

    /// Columns of the im2col matrix.
    pub fn k(&self) -> usize {
        self.kh * self.kw * self.c_in
    }
}

fn out_extent(input: usize, k: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(input);
            Ok((out, total / 2))
        }
        Padding::Valid => {
            if k > input {
                return Err(Error::dim(format!(
                    "valid convolution with kernel extent {k} > input extent {input}"
                )));
            }
            Ok(((input - k) / stride + 1, 0))
        }
    }
}

/// Output `(height, width)` for an input/kernel pair.
pub fn conv_output_dims(
    in_h: usize,
    in_w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(Error::arg("stride must be at least 1"));
    }
    let (oh, _) = out_extent(in_h, kh, stride, padding)?;
    let (ow, _) = out_extent(in_w, kw, stride, padding)?;
    Ok((oh, ow))
}

fn geometry(
    input_shape: &[usize],
    kernel_shape: &[usize],
    stride: usize,
    padding: Padding,
) -> Result<ConvGeometry> {
    if stride == 0 {
        return Err(Error::arg("stride must be at least 1"));
    }
    let (batch, h, w, c) = match *input_shape {
        [h, w, c] => (1, h, w, c),
        [n, h, w, c] => (n, h, w, c),
        _ => {
            return Err(Error::dim(format!(
                "conv input must be [h,w,c] or [n,h,w,c], got {input_shape:?}"
            )))
        }
    };
    let [kh, kw, kc, c_out] = *kernel_shape else {
        return Err(Error::dim(format!(
            "conv kernel must be [kh,kw,c_in,c_out], got {kernel_shape:?}"
        )));
    };
    if kc != c {
        return Err(Error::dim(format!(
            "kernel expects {kc} input channels, input has {c}"
        )));
    }
    let (out_h, pad_top) = out_extent(h, kh, stride, padding)?;
    let (out_w, pad_left) = out_extent(w, kw, stride, padding)?;
    Ok(ConvGeometry {
        batch,
        in_h: h,
        in_w: w,
        c_in: c,
        kh,
        kw,
        c_out,
        stride,
        out_h,
        out_w,
        pad_top,
        pad_left,
    })
}

fn output_shape(input_rank: usize, g: &ConvGeometry) -> Vec<usize> {
    if input_rank == 3 {
        vec![g.out_h, g.out_w, g.c_out]
    } else {
        vec![g.batch, g.out_h, g.out_w, g.c_out]
    }
}

/// Source pixel for output position `o` and kernel tap `t`, if inside the image.
#[inline]
fn src(o: usize, t: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
    let p = o * stride + t;
    if p < pad || p - pad >= extent {
        None
    } else {
        Some(p - pad)
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeometry) -> Vec<T> {
    let k = g.k();
    let mut cols = vec![T::ZERO; g.m() * k];
    let img = g.in_h * g.in_w * g.c_in;
    let mut row = 0;
    for b in 0..g.batch {
        let xb = &x[b * img..(b + 1) * img];
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let dst = &mut cols[row * k..(row + 1) * k];
                for ky in 0..g.kh {
                    let Some(iy) = src(oy, ky, g.stride, g.pad_top, g.in_h) else {
                        continue;
                    };
                    for kx in 0..g.kw {
                        let Some(ix) = src(ox, kx, g.stride, g.pad_left, g.in_w) else {
                            continue;
                        };
                        let s = (iy * g.in_w + ix) * g.c_in;
                        let d = (ky * g.kw + kx) * g.c_in;
                        dst[d..d + g.c_in].copy_from_slice(&xb[s..s + g.c_in]);
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &[T], g: &ConvGeometry) -> Vec<T> {
    let k = g.k();
    let img = g.in_h * g.in_w * g.c_in;
    let mut x = vec![T::ZERO; g.batch * img];
    let mut row = 0;
    for b in 0..g.batch {
        let xb = &mut x[b * img..(b + 1) * img];
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let srow = &cols[row * k..(row + 1) * k];
                for ky in 0..g.kh {
                    let Some(iy) = src(oy, ky, g.stride, g.pad_top, g.in_h) else {
                        continue;
                    };
                    for kx in 0..g.kw {
                        let Some(ix) = src(ox, kx, g.stride, g.pad_left, g.in_w) else {
                            continue;
                        };
                        let d = (iy * g.in_w + ix) * g.c_in;
                        let s = (ky * g.kw + kx) * g.c_in;
                        for (dv, &sv) in xb[d..d + g.c_in].iter_mut().zip(&srow[s..s + g.c_in]) {
                            *dv += sv;
                        }
                    }
                }
                row += 1;
            }
        }
    }
    x
}

pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let g = geometry(input.shape(), kernel.shape(), stride, padding)?;
    let cols = im2col(input.data(), &g);
    let out = super::matmul(&cols, kernel.data(), g.m(), g.k(), g.c_out);
    Tensor::new(output_shape(input.rank(), &g), out)
}

/// Gradients of `sum(grad_out * conv2d_forward(input, kernel))` with respect
/// to the input and the kernel.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (gi, gk) = conv2d_backward_select(input, kernel, grad_out, stride, padding, true, true)?;
    Ok((gi.expect("requested"), gk.expect("requested")))
}

/// As [`conv2d_backward`] but skips whichever gradient is not requested.
pub fn conv2d_backward_select<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: Padding,
    want_input: bool,
    want_kernel: bool,
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>)> {
    let g = geometry(input.shape(), kernel.shape(), stride, padding)?;
    let expected = output_shape(input.rank(), &g);
    if grad_out.shape() != expected.as_slice() {
        return Err(Error::dim(format!(
            "grad_out shape {:?}, forward output is {expected:?}",
            grad_out.shape()
        )));
    }
    let (m, k, n) = (g.m(), g.k(), g.c_out);

    let grad_kernel = if want_kernel {
        let cols = im2col(input.data(), &g);
        let mut gk = vec![T::ZERO; k * n];
        // cols^T [k, m] * grad_out [m, n]
        T::gemm(
            k,
            m,
            n,
            T::ONE,
            &cols,
            1,
            k as isize,
            grad_out.data(),
            n as isize,
            1,
            T::ZERO,
            &mut gk,
            n as isize,
            1,
        );
        Some(Tensor::new(kernel.shape().to_vec(), gk)?)
    } else {
        None
    };

    let grad_input = if want_input {
        let mut gcols = vec![T::ZERO; m * k];
        // grad_out [m, n] * kernel^T [n, k]
        T::gemm(
            m,
            n,
            k,
            T::ONE,
            grad_out.data(),
            n as isize,
            1,
            kernel.data(),
            1,
            n as isize,
            T::ZERO,
            &mut gcols,
            k as isize,
            1,
        );
        Some(Tensor::new(input.shape().to_vec(), col2im(&gcols, &g))?)
    } else {
        None
    };

    Ok((grad_input, grad_kernel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    /// Direct nested-loop cross-correlation, independent of im2col.
    fn naive(input: &Tensor, kernel: &Tensor, stride: usize, padding: Padding) -> Tensor {
        let [h, w, c] = input.shape() else { panic!() };
        let [kh, kw, _, co] = kernel.shape() else { panic!() };
        let (h, w, c, kh, kw, co) = (*h, *w, *c, *kh, *kw, *co);
        let (oh, ow) = conv_output_dims(h, w, kh, kw, stride, padding).unwrap();
        let (pt, pl) = match padding {
            Padding::Valid => (0, 0),
            Padding::Same => (
                ((oh - 1) * stride + kh).saturating_sub(h) / 2,
                ((ow - 1) * stride + kw).saturating_sub(w) / 2,
            ),
        };
        let mut out = vec![0.0; oh * ow * co];
        for oy in 0..oh {
            for ox in 0..ow {
                for o in 0..co {
                    let mut acc = 0.0;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pt as isize;
                            let ix = (ox * stride + kx) as isize - pl as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            for ci in 0..c {
                                acc += input.data()[(iy as usize * w + ix as usize) * c + ci]
                                    * kernel.data()[((ky * kw + kx) * c + ci) * co + o];
                            }
                        }
                    }
                    out[(oy * ow + ox) * co + o] = acc;
                }
            }
        }
        Tensor::new(vec![oh, ow, co], out).unwrap()
    }

    #[test]
    fn table_shapes() {
        let x = Tensor::<f64>::zeros(&[32, 32, 3]).unwrap();
        let k = Tensor::zeros(&[8, 8, 3, 32]).unwrap();
        assert_eq!(conv2d_forward(&x, &k, 2, Padding::Same).unwrap().shape(), &[16, 16, 32]);

        let x = Tensor::<f64>::zeros(&[16, 16, 32]).unwrap();
        let k = Tensor::zeros(&[6, 6, 32, 64]).unwrap();
        assert_eq!(conv2d_forward(&x, &k, 2, Padding::Valid).unwrap().shape(), &[6, 6, 64]);

        let x = Tensor::<f64>::zeros(&[6, 6, 64]).unwrap();
        let k = Tensor::zeros(&[5, 5, 64, 64]).unwrap();
        assert_eq!(conv2d_forward(&x, &k, 1, Padding::Valid).unwrap().shape(), &[2, 2, 64]);
    }

    #[test]
    fn identity_kernel() {
        let x = Tensor::new(vec![1, 1, 1], vec![0.7]).unwrap();
        let k = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d_forward(&x, &k, 1, Padding::Valid).unwrap(), x);
    }

    #[test]
    fn valid_kernel_larger_than_input() {
        let x = Tensor::<f64>::zeros(&[3, 3, 1]).unwrap();
        let k = Tensor::zeros(&[4, 4, 1, 1]).unwrap();
        assert!(matches!(
            conv2d_forward(&x, &k, 1, Padding::Valid),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn shape_formulas_hold() {
        for input in 1..=9 {
            for k in 1..=input {
                for stride in 1..=3 {
                    let (same, _) = conv_output_dims(input, input, k, k, stride, Padding::Same).unwrap();
                    assert_eq!(same, input.div_ceil(stride));
                    let (valid, _) = conv_output_dims(input, input, k, k, stride, Padding::Valid).unwrap();
                    assert_eq!(valid, (input - k) / stride + 1);
                }
            }
        }
    }

    #[test]
    fn matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(h, w, c, kh, kw, co, s, p) in &[
            (5, 5, 2, 3, 3, 4, 1, Padding::Same),
            (7, 6, 3, 4, 3, 2, 2, Padding::Same),
            (8, 8, 1, 3, 2, 3, 3, Padding::Valid),
            (6, 7, 2, 2, 2, 1, 1, Padding::Valid),
            (4, 4, 2, 4, 4, 2, 2, Padding::Same),
        ] {
            let x = random(&[h, w, c], &mut rng);
            let k = random(&[kh, kw, c, co], &mut rng);
            let fast = conv2d_forward(&x, &k, s, p).unwrap();
            let slow = naive(&x, &k, s, p);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_padding_extra_pixel_is_bottom_right() {
        // in 4, k 2, stride 1: total pad 1 -> top 0, bottom 1
        let x = Tensor::new(vec![4, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k = Tensor::new(vec![2, 1, 1, 1], vec![1.0, 10.0]).unwrap();
        let y = conv2d_forward(&x, &k, 1, Padding::Same).unwrap();
        assert_eq!(y.data(), &[21.0, 32.0, 43.0, 4.0]);
    }

    #[test]
    fn batched_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = random(&[3, 3, 2, 3], &mut rng);
        let a = random(&[6, 6, 2], &mut rng);
        let b = random(&[6, 6, 2], &mut rng);
        let batch = Tensor::stack(&[a.data(), b.data()], &[6, 6, 2]).unwrap();
        let yb = conv2d_forward(&batch, &k, 2, Padding::Same).unwrap();
        let ya = conv2d_forward(&a, &k, 2, Padding::Same).unwrap();
        let yb1 = conv2d_forward(&b, &k, 2, Padding::Same).unwrap();
        assert_eq!(yb.row(0), ya.data());
        assert_eq!(yb.row(1), yb1.data());
    }

    #[test]
    fn zero_grad_out_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[5, 5, 2], &mut rng);
        let k = random(&[3, 3, 2, 2], &mut rng);
        let y = conv2d_forward(&x, &k, 1, Padding::Same).unwrap();
        let g = Tensor::zeros(y.shape()).unwrap();
        let (gi, gk) = conv2d_backward(&x, &k, &g, 1, Padding::Same).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(gk.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_by_one_kernel_input_grad_is_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[3, 4, 2], &mut rng);
        let k = random(&[1, 1, 2, 3], &mut rng);
        let g = random(&[3, 4, 3], &mut rng);
        let (gi, _) = conv2d_backward(&x, &k, &g, 1, Padding::Valid).unwrap();
        for p in 0..12 {
            for ci in 0..2 {
                let expect: f64 = (0..3).map(|o| g.data()[p * 3 + o] * k.data()[ci * 3 + o]).sum();
                assert!((gi.data()[p * 2 + ci] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grad_out_shape_checked() {
        let x = Tensor::<f64>::zeros(&[5, 5, 1]).unwrap();
        let k = Tensor::zeros(&[3, 3, 1, 1]).unwrap();
        let g = Tensor::zeros(&[5, 5, 1]).unwrap();
        assert!(conv2d_backward(&x, &k, &g, 1, Padding::Valid).is_err());
    }
}
