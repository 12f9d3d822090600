use super::params::{ParamBuilder, ParamId, Params};
use crate::tensor::{Scalar, Tensor};

/// Square-kernel 2-d convolution with zero padding, lowered to one GEMM per
/// call over the whole batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        pb: &mut ParamBuilder,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let weight = pb.normal(format!("{name}.weight"), &[cout, cin, kernel, kernel], 0.02);
        let bias = pb.zeros(format!("{name}.bias"), &[cout]);
        Conv2d {
            cin,
            cout,
            kernel,
            stride,
            pad,
            weight,
            bias,
        }
    }

    pub fn out_dim(&self, d: usize) -> usize {
        (d + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn col_rows(&self) -> usize {
        self.cin * self.kernel * self.kernel
    }

    fn im2col<T: Scalar>(&self, x: &Tensor<T>, ho: usize, wo: usize) -> Vec<T> {
        let (n, h, w) = (x.n, x.h, x.w);
        let cols = n * ho * wo;
        let mut col = vec![T::zero(); self.col_rows() * cols];
        let k = self.kernel;
        for ci in 0..self.cin {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    for s in 0..n {
                        let src = x.plane_slice(ci, s);
                        for oy in 0..ho {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                            let drow = &mut dst[(s * ho + oy) * wo..(s * ho + oy + 1) * wo];
                            for (ox, d) in drow.iter_mut().enumerate() {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix >= 0 && ix < w as isize {
                                    *d = srow[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im<T: Scalar>(&self, col: &[T], dx: &mut Tensor<T>, ho: usize, wo: usize) {
        let (n, h, w) = (dx.n, dx.h, dx.w);
        let cols = n * ho * wo;
        let k = self.kernel;
        for ci in 0..self.cin {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &col[row * cols..(row + 1) * cols];
                    for s in 0..n {
                        let dst = dx.plane_slice_mut(ci, s);
                        for oy in 0..ho {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let drow = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                            let srow = &src[(s * ho + oy) * wo..(s * ho + oy + 1) * wo];
                            for (ox, &g) in srow.iter().enumerate() {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix >= 0 && ix < w as isize {
                                    drow[ix as usize] = drow[ix as usize] + g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward<T: Scalar>(&self, p: &Params<T>, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c, self.cin, "conv input channels");
        let (ho, wo) = (self.out_dim(x.h), self.out_dim(x.w));
        let col = self.im2col(x, ho, wo);
        let cols = x.n * ho * wo;
        let mut out = Tensor::zeros(self.cout, x.n, ho, wo);
        let bias = p.get(self.bias);
        for (co, chunk) in out.data.chunks_mut(cols).enumerate() {
            chunk.fill(bias[co]);
        }
        T::gemm(
            self.cout,
            self.col_rows(),
            cols,
            p.get(self.weight),
            false,
            &col,
            false,
            &mut out.data,
            true,
        );
        out
    }

    /// Back-propagate `dy` through the layer. Parameter gradients are
    /// accumulated into `grads` when given; the input gradient is returned when
    /// `want_dx` is set.
    pub fn backward<T: Scalar>(
        &self,
        p: &Params<T>,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        grads: Option<&mut Params<T>>,
        want_dx: bool,
    ) -> Option<Tensor<T>> {
        let (ho, wo) = (dy.h, dy.w);
        let cols = x.n * ho * wo;
        let rows = self.col_rows();
        let col = self.im2col(x, ho, wo);
        if let Some(g) = grads {
            T::gemm(
                self.cout,
                cols,
                rows,
                &dy.data,
                false,
                &col,
                true,
                g.get_mut(self.weight),
                true,
            );
            let gb = g.get_mut(self.bias);
            for (co, chunk) in dy.data.chunks(cols).enumerate() {
                gb[co] = gb[co] + chunk.iter().copied().sum::<T>();
            }
        }
        if !want_dx {
            return None;
        }
        let mut dcol = col;
        T::gemm(
            rows,
            self.cout,
            cols,
            p.get(self.weight),
            true,
            &dy.data,
            false,
            &mut dcol,
            false,
        );
        let mut dx = Tensor::zeros(x.c, x.n, x.h, x.w);
        self.col2im(&dcol, &mut dx, ho, wo);
        Some(dx)
    }
}
