//! Dense row-major tensors and the handful of kernels the two model
//! families need. There is no autodiff graph: every layer supplies its own
//! analytic backward rule.

mod activation;
mod conv;

pub use activation::{log_softmax, relu, relu_backward, softmax, softmax_xent};
pub(crate) use activation::xent_with_grad;
pub use conv::{
    conv2d_backward, conv2d_backward_select, conv2d_forward, conv_output_dims, ConvGeometry,
    Padding,
};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use crate::error::{Error, Result};

/// Floating point element type. `f64` is the default everywhere; `f32` is
/// used to speed up CNN training.
pub trait Scalar:
    Copy
    + Debug
    + Default
    + PartialOrd
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    const NAME: &'static str;

    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;

    /// `C = alpha * A B + beta * C` with arbitrary strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path, $name:literal) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            const NAME: &'static str = $name;

            #[inline]
            fn of(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
                    if rows == 0 || cols == 0 {
                        0
                    } else {
                        ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
                    }
                };
                assert!(a.len() >= span(m, k, rsa, csa), "gemm: A too short");
                assert!(b.len() >= span(k, n, rsb, csb), "gemm: B too short");
                assert!(c.len() >= span(m, n, rsc, csc), "gemm: C too short");
                // SAFETY: the asserts above bound every index the kernel touches.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_scalar!(f64, matrixmultiply::dgemm, "f64");
impl_scalar!(f32, matrixmultiply::sgemm, "f32");

/// Row-major product `A[m,k] * B[k,n]` into a fresh buffer.
pub(crate) fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::ZERO; m * n];
    T::gemm(
        m, k, n, T::ONE, a, k as isize, 1, b, n as isize, 1, T::ZERO, &mut c, n as isize, 1,
    );
    c
}

/// Dense n-dimensional array. `shape` extents are all positive and their
/// product equals `data.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::dim("tensor shape must have at least one axis"));
    }
    if shape.contains(&0) {
        return Err(Error::dim(format!("zero extent in shape {shape:?}")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::dim(format!("shape {shape:?} overflows")))
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let len = checked_len(&shape)?;
        if len != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} implies {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = checked_len(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![T::ZERO; len],
        })
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let len = checked_len(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn from_vec(data: Vec<T>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    /// Stack equally shaped rows into a tensor with a new leading axis.
    pub fn stack(rows: &[&[T]], row_shape: &[usize]) -> Result<Self> {
        let row_len = checked_len(row_shape)?;
        let mut data = Vec::with_capacity(rows.len() * row_len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != row_len {
                return Err(Error::dim(format!(
                    "row {i} has {} elements, expected {row_len}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        let mut shape = vec![rows.len()];
        shape.extend_from_slice(row_shape);
        Self::new(shape, data)
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data)
    }

    /// Extent of the leading axis.
    pub fn outer(&self) -> usize {
        self.shape[0]
    }

    /// Number of elements in one slice along the leading axis.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let l = self.row_len();
        &self.data[i * l..(i + 1) * l]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let l = self.row_len();
        &mut self.data[i * l..(i + 1) * l]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> {
        self.data.chunks_exact(self.row_len().max(1))
    }

    /// Copy of rows `idx` (in order) along the leading axis.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let l = self.row_len();
        let mut data = Vec::with_capacity(idx.len() * l);
        for &i in idx {
            if i >= self.outer() {
                return Err(Error::dim(format!("row {i} out of range {}", self.outer())));
            }
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Self::new(shape, data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::of(v.f64())).collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.data.len() != other.data.len() {
            return Err(Error::dim(format!(
                "dot of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(dot(&self.data, &other.data))
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.f64().abs()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v.f64() * v.f64()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| f64::max(m, v.f64().abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Error out if any element is NaN or infinite.
    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }
}

/// Standard sequential dot product in `f64`.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.f64() * y.f64()).sum()
}

/// `w . x + b`
pub fn matvec(w: &Tensor, x: &Tensor, b: f64) -> Result<f64> {
    if w.len() != x.len() {
        return Err(Error::dim(format!(
            "weights {:?} vs input {:?}",
            w.shape(),
            x.shape()
        )));
    }
    Ok(dot(w.data(), x.data()) + b)
}

/// Shape of one image, `h x w x c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape2D {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape2D {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_examples() {
        let w = Tensor::from_vec(vec![1.0, 2.0]).unwrap();
        let x = Tensor::from_vec(vec![3.0, 4.0]).unwrap();
        assert_eq!(matvec(&w, &x, 1.0).unwrap(), 12.0);

        let zero = Tensor::from_vec(vec![0.0; 5]).unwrap();
        let x = Tensor::from_vec(vec![0.3, -1.0, 7.0, 2.0, 9.5]).unwrap();
        assert_eq!(matvec(&zero, &x, 0.0).unwrap(), 0.0);

        for i in 0..5 {
            let mut e = vec![0.0; 5];
            e[i] = 1.0;
            let e = Tensor::from_vec(e).unwrap();
            assert_eq!(matvec(&e, &x, 0.0).unwrap(), x.data()[i]);
        }
    }

    #[test]
    fn matvec_shape_mismatch() {
        let w = Tensor::from_vec(vec![1.0, 2.0]).unwrap();
        let x = Tensor::from_vec(vec![3.0]).unwrap();
        assert!(matches!(matvec(&w, &x, 0.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn shape_invariant_enforced() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::new(vec![2, 0], vec![]).is_err());
        let t = Tensor::<f64>::zeros(&[2, 3]).unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t.row_len(), 3);
        assert!(t.clone().reshape(&[3, 2]).is_ok());
        assert!(t.reshape(&[4, 2]).is_err());
    }

    #[test]
    fn matmul_small() {
        // [1 2; 3 4] * [5; 6]
        let c = matmul(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0], 2, 2, 1);
        assert_eq!(c, vec![17.0, 39.0]);
    }

    #[test]
    fn select_rows_and_stack() {
        let t = Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let s = t.select_rows(&[2, 0]).unwrap();
        assert_eq!(s.data(), &[5.0, 6.0, 1.0, 2.0]);
        let st = Tensor::stack(&[t.row(1), t.row(1)], &[2]).unwrap();
        assert_eq!(st.shape(), &[2, 2]);
        assert_eq!(st.data(), &[3.0, 4.0, 3.0, 4.0]);
    }
}
