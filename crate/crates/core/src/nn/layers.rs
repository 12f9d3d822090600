use crate::tensor::{Scalar, Tensor};

const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Per-sample, per-channel normalization without affine parameters. Returns the
/// normalized tensor and `1 / std` of each `(c, n)` plane for the backward pass.
pub fn instance_norm<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<T>) {
    let p = x.plane();
    let inv_n = T::lit(1.0 / p as f64);
    let eps = T::lit(INSTANCE_NORM_EPS);
    let mut y = x.clone();
    let mut inv_std = Vec::with_capacity(x.c * x.n);
    for plane in y.data.chunks_mut(p) {
        let mean = plane.iter().copied().sum::<T>() * inv_n;
        let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_n;
        let is = T::one() / (var + eps).sqrt();
        for v in plane.iter_mut() {
            *v = (*v - mean) * is;
        }
        inv_std.push(is);
    }
    (y, inv_std)
}

pub fn instance_norm_backward<T: Scalar>(y: &Tensor<T>, inv_std: &[T], dy: &Tensor<T>) -> Tensor<T> {
    let p = y.plane();
    let inv_n = T::lit(1.0 / p as f64);
    let mut dx = dy.clone();
    for ((dplane, yplane), &is) in dx.data.chunks_mut(p).zip(y.data.chunks(p)).zip(inv_std) {
        let mean_dy = dplane.iter().copied().sum::<T>() * inv_n;
        let mean_dyy = dplane
            .iter()
            .zip(yplane)
            .map(|(&g, &v)| g * v)
            .sum::<T>()
            * inv_n;
        for (g, &v) in dplane.iter_mut().zip(yplane) {
            *g = is * (*g - mean_dy - v * mean_dyy);
        }
    }
    dx
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Silu,
    Tanh,
    Sigmoid,
    Identity,
}

#[inline]
fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl Activation {
    pub fn forward<T: Scalar>(self, x: &Tensor<T>) -> Tensor<T> {
        match self {
            Activation::LeakyRelu(slope) => {
                let s = T::lit(slope);
                x.map(|v| if v > T::zero() { v } else { v * s })
            }
            Activation::Silu => x.map(|v| v * sigmoid(v)),
            Activation::Tanh => x.map(|v| v.tanh()),
            Activation::Sigmoid => x.map(sigmoid),
            Activation::Identity => x.clone(),
        }
    }

    /// Input gradient given the pre-activation `x`, the output `y` and `dy`.
    pub fn backward<T: Scalar>(self, x: &Tensor<T>, y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
        let mut dx = dy.clone();
        match self {
            Activation::LeakyRelu(slope) => {
                let s = T::lit(slope);
                for (g, &v) in dx.data.iter_mut().zip(&x.data) {
                    if v <= T::zero() {
                        *g = *g * s;
                    }
                }
            }
            Activation::Silu => {
                for (g, &v) in dx.data.iter_mut().zip(&x.data) {
                    let sg = sigmoid(v);
                    *g = *g * (sg + v * sg * (T::one() - sg));
                }
            }
            Activation::Tanh => {
                for (g, &t) in dx.data.iter_mut().zip(&y.data) {
                    *g = *g * (T::one() - t * t);
                }
            }
            Activation::Sigmoid => {
                for (g, &s) in dx.data.iter_mut().zip(&y.data) {
                    *g = *g * s * (T::one() - s);
                }
            }
            Activation::Identity => {}
        }
        dx
    }
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2x<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (h2, w2) = (x.h * 2, x.w * 2);
    let mut out = Tensor::zeros(x.c, x.n, h2, w2);
    for (dst, src) in out.data.chunks_mut(h2 * w2).zip(x.data.chunks(x.plane())) {
        for oy in 0..h2 {
            let srow = &src[(oy / 2) * x.w..(oy / 2 + 1) * x.w];
            for (ox, d) in dst[oy * w2..(oy + 1) * w2].iter_mut().enumerate() {
                *d = srow[ox / 2];
            }
        }
    }
    out
}

pub fn upsample2x_backward<T: Scalar>(dy: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let mut dx = Tensor::zeros(dy.c, dy.n, h, w);
    for (dst, src) in dx.data.chunks_mut(h * w).zip(dy.data.chunks(dy.plane())) {
        for oy in 0..dy.h {
            for ox in 0..dy.w {
                let i = (oy / 2) * w + ox / 2;
                dst[i] = dst[i] + src[oy * dy.w + ox];
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Tensor<f64> {
        let data = (0..2 * 2 * 3 * 3)
            .map(|i| ((i * 13 % 11) as f64 - 5.0) / 3.0 + 0.05)
            .collect();
        Tensor::from_vec(2, 2, 3, 3, data)
    }

    fn check_fd(f: impl Fn(&Tensor<f64>) -> Tensor<f64>, grad: impl Fn(&Tensor<f64>, &Tensor<f64>) -> Tensor<f64>) {
        let x = fixture();
        let y = f(&x);
        let r: Vec<f64> = (0..y.len()).map(|i| ((i % 5) as f64 - 2.0) * 0.7).collect();
        let dy = Tensor::from_vec(y.c, y.n, y.h, y.w, r.clone());
        let dx = grad(&x, &dy);
        let h = 1e-6;
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data[i] += h;
            xm.data[i] -= h;
            let fp: f64 = f(&xp).data.iter().zip(&r).map(|(a, b)| a * b).sum();
            let fm: f64 = f(&xm).data.iter().zip(&r).map(|(a, b)| a * b).sum();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - dx.data[i]).abs() < 1e-6, "index {i}: fd {fd} analytic {}", dx.data[i]);
        }
    }

    #[test]
    fn instance_norm_gradient() {
        check_fd(
            |x| instance_norm(x).0,
            |x, dy| {
                let (y, is) = instance_norm(x);
                instance_norm_backward(&y, &is, dy)
            },
        );
    }

    #[test]
    fn instance_norm_output_is_standardized() {
        let (y, _) = instance_norm(&fixture());
        for plane in y.data.chunks(9) {
            let m: f64 = plane.iter().sum::<f64>() / 9.0;
            let v: f64 = plane.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 9.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn activation_gradients() {
        for act in [Activation::Silu, Activation::Tanh, Activation::Sigmoid, Activation::LeakyRelu(0.2)] {
            check_fd(
                |x| act.forward(x),
                |x, dy| act.backward(x, &act.forward(x), dy),
            );
        }
    }

    #[test]
    fn upsample_gradient_and_values() {
        check_fd(upsample2x, |_, dy| upsample2x_backward(dy));
        let x = fixture();
        let u = upsample2x(&x);
        assert_eq!(u.at(1, 1, 5, 3), x.at(1, 1, 2, 1));
    }
}
