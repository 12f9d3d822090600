//! Dense 4-d activations and the scalar abstraction the networks are generic over.
//!
//! Activations are stored channel-major as `[C, N, H, W]` so that a convolution
//! expressed as `weights[Cout, K] x columns[K, N*H*W]` writes its result directly
//! in layout, without a transpose per layer.

use std::fmt::Debug;

use num_traits::Float;

/// Floating-point element type of the networks. Training runs in `f32`; the
/// finite-difference checks run the same code in `f64`.
pub trait Scalar: Float + Default + Debug + Send + Sync + std::iter::Sum + 'static {
    fn lit(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `c = a * b + beta * c` for row-major `a: [m, k]` and `b: [k, n]`,
    /// with optional transposition of either operand in storage.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_trans: bool,
        b: &[Self],
        b_trans: bool,
        c: &mut [Self],
        accumulate: bool,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            #[inline]
            fn lit(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_trans: bool,
                b: &[Self],
                b_trans: bool,
                c: &mut [Self],
                accumulate: bool,
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: the asserted slice lengths cover every element addressed
                // by the given dimensions and strides.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// A `[C, N, H, W]` activation tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(c: usize, n: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            n,
            h,
            w,
            data: vec![T::zero(); c * n * h * w],
        }
    }

    pub fn from_vec(c: usize, n: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * n * h * w, "tensor data length");
        Tensor { c, n, h, w, data }
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.c, self.n, self.h, self.w)
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, c: usize, n: usize, y: usize, x: usize) -> usize {
        ((c * self.n + n) * self.h + y) * self.w + x
    }

    #[inline]
    pub fn at(&self, c: usize, n: usize, y: usize, x: usize) -> T {
        self.data[self.idx(c, n, y, x)]
    }

    /// Contiguous `H*W` plane for channel `c` of sample `n`.
    pub fn plane_slice(&self, c: usize, n: usize) -> &[T] {
        let p = self.plane();
        let start = (c * self.n + n) * p;
        &self.data[start..start + p]
    }

    pub fn plane_slice_mut(&mut self, c: usize, n: usize) -> &mut [T] {
        let p = self.plane();
        let start = (c * self.n + n) * p;
        &mut self.data[start..start + p]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    /// Concatenate along the channel axis. Because channels are outermost this
    /// is a plain append.
    pub fn concat_channels(a: &Self, b: &Self) -> Self {
        assert_eq!((a.n, a.h, a.w), (b.n, b.h, b.w), "concat spatial/batch mismatch");
        let mut data = Vec::with_capacity(a.len() + b.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Tensor {
            c: a.c + b.c,
            n: a.n,
            h: a.h,
            w: a.w,
            data,
        }
    }

    /// Split off the first `c_first` channels; inverse of [`Tensor::concat_channels`].
    pub fn split_channels(&self, c_first: usize) -> (Self, Self) {
        let cut = c_first * self.n * self.plane();
        (
            Tensor::from_vec(c_first, self.n, self.h, self.w, self.data[..cut].to_vec()),
            Tensor::from_vec(
                self.c - c_first,
                self.n,
                self.h,
                self.w,
                self.data[cut..].to_vec(),
            ),
        )
    }

    /// Stack along the batch axis.
    pub fn concat_batch(a: &Self, b: &Self) -> Self {
        assert_eq!((a.c, a.h, a.w), (b.c, b.h, b.w), "concat channel/spatial mismatch");
        let mut out = Tensor::zeros(a.c, a.n + b.n, a.h, a.w);
        let p = a.plane();
        for c in 0..a.c {
            let dst = c * (a.n + b.n) * p;
            out.data[dst..dst + a.n * p].copy_from_slice(&a.data[c * a.n * p..(c + 1) * a.n * p]);
            out.data[dst + a.n * p..dst + (a.n + b.n) * p]
                .copy_from_slice(&b.data[c * b.n * p..(c + 1) * b.n * p]);
        }
        out
    }

    /// Samples `[start, start + len)` along the batch axis.
    pub fn batch_range(&self, start: usize, len: usize) -> Self {
        let mut out = Tensor::zeros(self.c, len, self.h, self.w);
        let p = self.plane();
        for c in 0..self.c {
            let src = (c * self.n + start) * p;
            out.data[c * len * p..(c + 1) * len * p].copy_from_slice(&self.data[src..src + len * p]);
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert!(self.same_shape(other));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            c: self.c,
            n: self.n,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}
