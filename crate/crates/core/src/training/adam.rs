use crate::nn::Params;
use crate::tensor::Scalar;

pub const ADAM_EPS: f64 = 1e-8;

/// Adam moment buffers for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub m: Params<T>,
    pub v: Params<T>,
    pub t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &Params<T>) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params<T>, grads: &Params<T>, lr: f64, beta1: f64, beta2: f64) {
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (ob1, ob2) = (T::lit(1.0 - beta1), T::lit(1.0 - beta2));
        let step = T::lit(lr / bc1);
        let inv_bc2 = T::lit(1.0 / bc2);
        let eps = T::lit(ADAM_EPS);
        for (k, p) in params.arrays.iter_mut().enumerate() {
            let g = &grads.arrays[k].data;
            let m = &mut self.m.arrays[k].data;
            let v = &mut self.v.arrays[k].data;
            for i in 0..p.data.len() {
                m[i] = b1 * m[i] + ob1 * g[i];
                v[i] = b2 * v[i] + ob2 * g[i] * g[i];
                p.data[i] = p.data[i] - step * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
            }
        }
    }
}
