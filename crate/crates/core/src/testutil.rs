use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-4;

pub fn random_tensor(c: usize, n: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..c * n * h * w).map(|_| rng.random_range(-0.9..0.9)).collect();
    Tensor::from_vec(c, n, h, w, data)
}

pub fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// Compares analytic and central-difference derivatives over `samples`
/// random coordinates (all of them when `samples` is 0) and returns the
/// relative error of the sampled gradient vectors.
pub fn fd_error(
    values: &mut [f64],
    analytic: &[f64],
    samples: usize,
    seed: u64,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<usize> = if samples == 0 {
        (0..values.len()).collect()
    } else {
        (0..samples).map(|_| rng.random_range(0..values.len())).collect()
    };
    let (mut num, mut den) = (0.0, 0.0);
    for i in coords {
        let orig = values[i];
        values[i] = orig + FD_STEP;
        let up = loss(values);
        values[i] = orig - FD_STEP;
        let down = loss(values);
        values[i] = orig;
        let fd = (up - down) / (2.0 * FD_STEP);
        num += (fd - analytic[i]).powi(2);
        den += fd.powi(2).max(analytic[i].powi(2));
    }
    // Absolute floor: biases ahead of a normalisation have zero true gradient.
    num.sqrt() / den.sqrt().max(1e-5)
}
