//! Reference computations shared by the integration test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use samc::tensor::Tensor;
use samc::warp::{NUM_KEYPOINTS, TPS_REGULARIZATION};

pub const FD_STEP: f64 = 1e-4;

pub fn random_tensor(c: usize, n: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..c * n * h * w).map(|_| rng.random_range(-0.9..0.9)).collect();
    Tensor::from_vec(c, n, h, w, data)
}

pub fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// Relative error between analytic and central-difference derivatives over
/// `samples` random coordinates (all of them when `samples` is 0), floored at
/// 1e-5 in the denominator.
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
    num.sqrt() / den.sqrt().max(1e-5)
}

/// Gaussian elimination with partial pivoting on a dense copy.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn tps_kernel(p: [f64; 2], q: [f64; 2]) -> f64 {
    let r = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
    if r == 0.0 {
        0.0
    } else {
        r * r * r.ln()
    }
}

/// Displacement field from an independently assembled TPS system.
pub fn oracle_field(dst: &[[f64; 2]], src: &[[f64; 2]], h: usize, w: usize) -> Vec<[f64; 2]> {
    let n = dst.len();
    let mut a = vec![vec![0.0; n + 3]; n + 3];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = tps_kernel(dst[i], dst[j]) + if i == j { TPS_REGULARIZATION } else { 0.0 };
        }
        let p = [1.0, dst[i][0], dst[i][1]];
        for k in 0..3 {
            a[i][n + k] = p[k];
            a[n + k][i] = p[k];
        }
    }
    let coef: Vec<Vec<f64>> = (0..2)
        .map(|d| {
            let mut b: Vec<f64> = (0..n).map(|i| src[i][d] - dst[i][d]).collect();
            b.extend([0.0; 3]);
            solve_dense(a.clone(), b)
        })
        .collect();
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let p = [r as f64, c as f64];
            out.push([0, 1].map(|d| {
                let k = &coef[d];
                let mut s = k[n] + k[n + 1] * p[0] + k[n + 2] * p[1];
                for i in 0..n {
                    s += k[i] * tps_kernel(p, dst[i]);
                }
                s
            }));
        }
    }
    out
}

/// Jittered 7x10 grid: spread out, never collinear.
pub fn random_kps(seed: u64, size: f64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..NUM_KEYPOINTS)
        .map(|i| {
            let (gr, gc) = ((i / 10) as f64, (i % 10) as f64);
            [
                size * (0.1 + 0.8 * gr / 6.0) + rng.random_range(-1.0..1.0),
                size * (0.08 + 0.84 * gc / 9.0) + rng.random_range(-1.0..1.0),
            ]
        })
        .collect()
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Full similarity matrix, then a first-maximum scan per probe.
pub fn rank1_oracle(probes: &[(Vec<f64>, usize)], gallery: &[(Vec<f64>, usize)]) -> f64 {
    let sims: Vec<Vec<f64>> = probes
        .iter()
        .map(|(p, _)| gallery.iter().map(|(g, _)| cos(p, g)).collect())
        .collect();
    let mut hits = 0;
    for (row, (_, id)) in sims.iter().zip(probes) {
        let mut best = 0;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        hits += usize::from(gallery[best].1 == *id);
    }
    100.0 * hits as f64 / probes.len() as f64
}

/// Best TPR over every threshold whose FPR stays within the target. Any real
/// threshold gives the same counts as the smallest observed score at or above
/// it, so scanning observed scores and +inf covers all of them.
pub fn tpr_oracle(genuine: &[f64], impostor: &[f64], f: f64) -> f64 {
    let mut thresholds: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    thresholds.push(f64::INFINITY);
    let mut best = 0.0f64;
    for &t in &thresholds {
        let fp = impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64;
        if fp <= f {
            let tp = genuine.iter().filter(|&&s| s >= t).count();
            best = best.max(100.0 * tp as f64 / genuine.len() as f64);
        }
    }
    best
}

/// Identities, probes (noisy copies of random identity centres) and a
/// one-per-identity gallery.
pub type RankFixture = (Vec<(Vec<f64>, usize)>, Vec<(Vec<f64>, usize)>);

pub fn rank_fixture(rng: &mut ChaCha8Rng) -> RankFixture {
    let ids = rng.random_range(2..=30usize);
    let dim = rng.random_range(2..=16usize);
    let noise = rng.random_range(0.05..2.0);
    let centres: Vec<Vec<f64>> = (0..ids).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let gallery: Vec<(Vec<f64>, usize)> = centres.iter().cloned().zip(0..).collect();
    let probes = (0..rng.random_range(1..=30usize))
        .map(|_| {
            let id = rng.random_range(0..ids);
            let v = centres[id].iter().map(|c| c + noise * rng.random_range(-1.0..1.0)).collect();
            (v, id)
        })
        .collect();
    (probes, gallery)
}

/// Genuine and impostor score lists totalling at most 1000; even trials draw
/// from a coarse lattice so ties are common.
pub fn score_fixture(rng: &mut ChaCha8Rng, trial: usize) -> (Vec<f64>, Vec<f64>) {
    let total = rng.random_range(2..=1000usize);
    let n_gen = rng.random_range(1..total);
    let n_imp = total - n_gen;
    let discrete = trial.is_multiple_of(2);
    let mut draw = |shift: f64| {
        if discrete {
            (rng.random_range(0..12) as f64) / 10.0 + shift
        } else {
            rng.random_range(-1.0..1.0) + shift
        }
    };
    let genuine = (0..n_gen).map(|_| draw(0.3)).collect();
    let impostor = (0..n_imp).map(|_| draw(0.0)).collect();
    (genuine, impostor)
}
