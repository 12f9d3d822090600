//! Adversarial, identity, reconstruction and texture (SAT) losses with their
//! analytic gradients, and the combined generator objective.
//!
//! Every `*_grad` function returns the loss value together with the gradient
//! of that value w.r.t. its differentiable inputs. Batched losses are averaged
//! over the batch.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SamcError};
use crate::models::EMBEDDING_DIM;
use crate::regions::{region_statistics, Region, RegionLabelMap};
use crate::tensor::{Scalar, Tensor};

pub const PROB_EPS: f64 = 1e-7;
pub const REG_WEIGHT: f64 = 0.2;
/// Floor on the squared norm when differentiating a Euclidean norm at zero.
pub const NORM_FLOOR: f64 = 1e-12;

/// Which generator-side losses participate. `rec` covers the attention
/// regularizer as well. Disabling `adv` also skips the discriminator update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossFlags {
    pub adv: bool,
    pub id: bool,
    pub rec: bool,
    pub sat: bool,
}

impl Default for LossFlags {
    fn default() -> Self {
        LossFlags {
            adv: true,
            id: true,
            rec: true,
            sat: true,
        }
    }
}

impl LossFlags {
    pub const NAMES: [&'static str; 4] = ["adv", "id", "rec", "sat"];

    pub fn none() -> Self {
        LossFlags {
            adv: false,
            id: false,
            rec: false,
            sat: false,
        }
    }

    fn slot(&mut self, name: &str) -> Result<&mut bool> {
        Ok(match name {
            "adv" => &mut self.adv,
            "id" => &mut self.id,
            "rec" => &mut self.rec,
            "sat" => &mut self.sat,
            other => {
                return Err(SamcError::Config(format!(
                    "unknown loss `{other}` (expected one of adv, id, rec, sat)"
                )))
            }
        })
    }

    /// All losses enabled except the comma-separated names in `list`.
    pub fn without(list: &str) -> Result<Self> {
        let mut f = LossFlags::default();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            *f.slot(name)? = false;
        }
        Ok(f)
    }
}

/// Comma-separated enabled names, e.g. `adv,id,rec,sat`; `none` for the empty set.
impl FromStr for LossFlags {
    type Err = SamcError;

    fn from_str(s: &str) -> Result<Self> {
        let mut f = LossFlags::none();
        if s.trim() == "none" {
            return Ok(f);
        }
        for name in s.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            *f.slot(name)? = true;
        }
        Ok(f)
    }
}

impl fmt::Display for LossFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let on = [self.adv, self.id, self.rec, self.sat];
        let names: Vec<&str> = Self::NAMES
            .iter()
            .zip(on)
            .filter(|(_, b)| *b)
            .map(|(n, _)| *n)
            .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

/// Generator-side adversarial objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AdvForm {
    /// `-mean ln D(Z)`.
    #[default]
    NonSaturating,
    /// `mean ln(1 - D(Z))`, negative-valued.
    Saturating,
}

impl FromStr for AdvForm {
    type Err = SamcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "non-saturating" | "nonsaturating" => Ok(AdvForm::NonSaturating),
            "saturating" => Ok(AdvForm::Saturating),
            other => Err(SamcError::Config(format!(
                "unknown adversarial form `{other}` (expected non-saturating or saturating)"
            ))),
        }
    }
}

impl fmt::Display for AdvForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdvForm::NonSaturating => "non-saturating",
            AdvForm::Saturating => "saturating",
        })
    }
}

/// Named scalar losses of one training step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBundle {
    pub adv_d: f64,
    pub adv_g: f64,
    pub id: f64,
    pub rec: f64,
    pub reg: f64,
    pub sat: f64,
    pub total: f64,
    pub enabled: LossFlags,
}

impl LossBundle {
    pub const COLUMNS: [&'static str; 7] = ["adv_d", "adv_g", "id", "rec", "reg", "sat", "total"];

    pub fn values(&self) -> [f64; 7] {
        [self.adv_d, self.adv_g, self.id, self.rec, self.reg, self.sat, self.total]
    }
}

/// Raw component values before flags are applied.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub adv_d: f64,
    pub adv_g: f64,
    pub id: f64,
    pub rec: f64,
    pub reg: f64,
    pub sat: f64,
}

/// Zero the disabled components and sum the rest in the fixed order
/// `adv_g + id + rec + reg + sat`.
pub fn total_generator_loss(c: LossComponents, flags: LossFlags) -> Result<LossBundle> {
    let named = [
        ("adv_d", c.adv_d),
        ("adv_g", c.adv_g),
        ("id", c.id),
        ("rec", c.rec),
        ("reg", c.reg),
        ("sat", c.sat),
    ];
    for (name, v) in named {
        if !v.is_finite() {
            return Err(SamcError::NonFinite { component: name });
        }
    }
    let keep = |on: bool, v: f64| if on { v } else { 0.0 };
    let b = LossBundle {
        adv_d: keep(flags.adv, c.adv_d),
        adv_g: keep(flags.adv, c.adv_g),
        id: keep(flags.id, c.id),
        rec: keep(flags.rec, c.rec),
        reg: keep(flags.rec, c.reg),
        sat: keep(flags.sat, c.sat),
        total: 0.0,
        enabled: flags,
    };
    let mut total = 0.0;
    for v in [b.adv_g, b.id, b.rec, b.reg, b.sat] {
        total += v;
    }
    Ok(LossBundle { total, ..b })
}

fn check_scores<T: Scalar>(scores: &Tensor<T>, what: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(SamcError::Shape(format!("{what} scores are empty")));
    }
    if let Some(v) = scores.data.iter().find(|v| !(v.as_f64() >= 0.0 && v.as_f64() <= 1.0)) {
        return Err(SamcError::Shape(format!(
            "{what} score {} is not a probability",
            v.as_f64()
        )));
    }
    Ok(())
}

/// `ln(clamp(p))` and its derivative w.r.t. `p` (zero where the clamp is active).
fn clamped_ln<T: Scalar>(p: T) -> (T, T) {
    let eps = T::lit(PROB_EPS);
    let hi = T::one() - eps;
    if p < eps {
        (eps.ln(), T::zero())
    } else if p > hi {
        (hi.ln(), T::zero())
    } else {
        (p.ln(), T::one() / p)
    }
}

/// Discriminator loss `-(mean ln real + mean ln(1 - fake))` with gradients
/// w.r.t. both score maps.
pub fn adversarial_loss_d_grad<T: Scalar>(
    real: &Tensor<T>,
    fake: &Tensor<T>,
) -> Result<(T, Tensor<T>, Tensor<T>)> {
    check_scores(real, "real")?;
    check_scores(fake, "fake")?;
    let (nr, nf) = (T::lit(real.len() as f64), T::lit(fake.len() as f64));
    let mut d_real = real.clone();
    let mut d_fake = fake.clone();
    let mut sr = T::zero();
    for g in d_real.data.iter_mut() {
        let (l, dl) = clamped_ln(*g);
        sr = sr + l;
        *g = -dl / nr;
    }
    let mut sf = T::zero();
    for g in d_fake.data.iter_mut() {
        let (l, dl) = clamped_ln(T::one() - *g);
        sf = sf + l;
        *g = dl / nf;
    }
    Ok((-(sr / nr + sf / nf), d_real, d_fake))
}

pub fn adversarial_loss_d<T: Scalar>(real: &Tensor<T>, fake: &Tensor<T>) -> Result<T> {
    Ok(adversarial_loss_d_grad(real, fake)?.0)
}

/// Generator adversarial loss and its gradient w.r.t. the fake scores.
pub fn adversarial_loss_g_grad<T: Scalar>(fake: &Tensor<T>, form: AdvForm) -> Result<(T, Tensor<T>)> {
    check_scores(fake, "fake")?;
    let n = T::lit(fake.len() as f64);
    let mut d = fake.clone();
    let mut s = T::zero();
    for g in d.data.iter_mut() {
        match form {
            AdvForm::NonSaturating => {
                let (l, dl) = clamped_ln(*g);
                s = s - l;
                *g = -dl / n;
            }
            AdvForm::Saturating => {
                let (l, dl) = clamped_ln(T::one() - *g);
                s = s + l;
                *g = -dl / n;
            }
        }
    }
    Ok((s / n, d))
}

pub fn adversarial_loss_g<T: Scalar>(fake: &Tensor<T>, form: AdvForm) -> Result<T> {
    Ok(adversarial_loss_g_grad(fake, form)?.0)
}

/// `||emb_z - emb_y||_2` and its gradient w.r.t. `emb_z`.
pub fn identity_loss_grad<T: Scalar>(emb_z: &[T], emb_y: &[T]) -> Result<(T, Vec<T>)> {
    if emb_z.len() != emb_y.len() {
        return Err(SamcError::Shape(format!(
            "embedding dimensions differ: {} vs {}",
            emb_z.len(),
            emb_y.len()
        )));
    }
    let diff: Vec<T> = emb_z.iter().zip(emb_y).map(|(a, b)| *a - *b).collect();
    let sq: T = diff.iter().map(|d| *d * *d).sum();
    let denom = sq.max(T::lit(NORM_FLOOR)).sqrt();
    Ok((sq.sqrt(), diff.into_iter().map(|d| d / denom).collect()))
}

pub fn identity_loss<T: Scalar>(emb_z: &[T], emb_y: &[T]) -> Result<T> {
    Ok(identity_loss_grad(emb_z, emb_y)?.0)
}

/// Batch mean of the identity loss over row-major `N x EMBEDDING_DIM` embeddings.
pub fn identity_loss_batch_grad<T: Scalar>(emb_z: &[T], emb_y: &[T]) -> Result<(T, Vec<T>)> {
    if emb_z.len() != emb_y.len() || emb_z.is_empty() || !emb_z.len().is_multiple_of(EMBEDDING_DIM) {
        return Err(SamcError::Shape(format!(
            "batched embeddings must be equal multiples of {EMBEDDING_DIM}, got {} and {}",
            emb_z.len(),
            emb_y.len()
        )));
    }
    let n = emb_z.len() / EMBEDDING_DIM;
    let inv_n = T::lit(1.0 / n as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(emb_z.len());
    for (z, y) in emb_z.chunks(EMBEDDING_DIM).zip(emb_y.chunks(EMBEDDING_DIM)) {
        let (v, g) = identity_loss_grad(z, y)?;
        total = total + v;
        grad.extend(g.into_iter().map(|g| g * inv_n));
    }
    Ok((total * inv_n, grad))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecTerms<T> {
    pub term1: T,
    pub term2: T,
    pub rec: T,
    pub reg: T,
}

fn check_rec_shapes<T: Scalar>(a: &Tensor<T>, w: &Tensor<T>, x: &Tensor<T>, z: &Tensor<T>) -> Result<()> {
    let ok = a.c == 1
        && (a.n, a.h, a.w) == (z.n, z.h, z.w)
        && w.same_shape(z)
        && x.same_shape(z)
        && !z.is_empty();
    if !ok {
        return Err(SamcError::Shape(format!(
            "reconstruction inputs disagree: A {:?}, W {:?}, X {:?}, Z {:?}",
            a.dims(),
            w.dims(),
            x.dims(),
            z.dims()
        )));
    }
    Ok(())
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Attention-weighted reconstruction terms. `a` is `[1, N, H, W]` and is
/// broadcast over the channels of the `[C, N, H, W]` images.
pub fn reconstruction_loss<T: Scalar>(
    a: &Tensor<T>,
    w: &Tensor<T>,
    x: &Tensor<T>,
    z: &Tensor<T>,
) -> Result<RecTerms<T>> {
    check_rec_shapes(a, w, x, z)?;
    let plane = a.len();
    let (mut t1, mut t2) = (T::zero(), T::zero());
    for i in 0..z.len() {
        let av = a.data[i % plane];
        t1 = t1 + (av * w.data[i] - av * z.data[i]).abs();
        t2 = t2 + ((T::one() - av) * x.data[i] - (T::one() - av) * z.data[i]).abs();
    }
    let m = T::lit(z.len() as f64);
    let (term1, term2) = (t1 / m, t2 / m);
    Ok(RecTerms {
        term1,
        term2,
        rec: term1 + term2,
        reg: T::lit(REG_WEIGHT) * (term1 - term2).abs(),
    })
}

/// Reconstruction terms plus gradients of `rec + reg` w.r.t. `a` and `z`.
pub fn reconstruction_loss_grad<T: Scalar>(
    a: &Tensor<T>,
    w: &Tensor<T>,
    x: &Tensor<T>,
    z: &Tensor<T>,
) -> Result<(RecTerms<T>, Tensor<T>, Tensor<T>)> {
    let terms = reconstruction_loss(a, w, x, z)?;
    let s = sign(terms.term1 - terms.term2) * T::lit(REG_WEIGHT);
    let m = T::lit(z.len() as f64);
    let c1 = (T::one() + s) / m;
    let c2 = (T::one() - s) / m;
    let plane = a.len();
    let mut da = Tensor::zeros(a.c, a.n, a.h, a.w);
    let mut dz = Tensor::zeros(z.c, z.n, z.h, z.w);
    for i in 0..z.len() {
        let av = a.data[i % plane];
        let (wz, xz) = (w.data[i] - z.data[i], x.data[i] - z.data[i]);
        let s1 = sign(av * wz) * c1;
        let s2 = sign((T::one() - av) * xz) * c2;
        da.data[i % plane] = da.data[i % plane] + s1 * wz - s2 * xz;
        dz.data[i] = -s1 * av - s2 * (T::one() - av);
    }
    Ok((terms, da, dz))
}

fn norm_with_grad<T: Scalar>(u: &[T]) -> (T, Vec<T>) {
    let sq: T = u.iter().map(|v| *v * *v).sum();
    let denom = sq.max(T::lit(NORM_FLOOR)).sqrt();
    (sq.sqrt(), u.iter().map(|v| *v / denom).collect())
}

fn check_sat_shapes<T: Scalar>(
    feat_z: &Tensor<T>,
    labels_x: &[RegionLabelMap],
    feat_y: &Tensor<T>,
    labels_y: &[RegionLabelMap],
) -> Result<()> {
    if !feat_z.same_shape(feat_y) || labels_x.len() != feat_z.n || labels_y.len() != feat_z.n || feat_z.n == 0 {
        return Err(SamcError::Shape(format!(
            "texture loss inputs disagree: Z features {:?} with {} label maps, Y features {:?} with {}",
            feat_z.dims(),
            labels_x.len(),
            feat_y.dims(),
            labels_y.len()
        )));
    }
    Ok(())
}

/// Region-statistics texture loss averaged over the batch, with its gradient
/// w.r.t. `feat_z`. Sample `n` of `feat_z` is labelled by `labels_x[n]`, of
/// `feat_y` by `labels_y[n]`; both at feature resolution.
pub fn sat_loss_grad<T: Scalar>(
    feat_z: &Tensor<T>,
    labels_x: &[RegionLabelMap],
    feat_y: &Tensor<T>,
    labels_y: &[RegionLabelMap],
) -> Result<(T, Tensor<T>)> {
    check_sat_shapes(feat_z, labels_x, feat_y, labels_y)?;
    let inv_batch = T::lit(1.0 / feat_z.n as f64);
    let mut total = T::zero();
    let mut grad = Tensor::zeros(feat_z.c, feat_z.n, feat_z.h, feat_z.w);
    for n in 0..feat_z.n {
        for region in Region::COSMETIC {
            let sz = region_statistics(feat_z, n, &labels_x[n], region)?;
            let sy = region_statistics(feat_y, n, &labels_y[n], region)?;
            if sz.pixel_count == 0 || sy.pixel_count == 0 {
                continue;
            }
            let dmu: Vec<T> = sz.mean.iter().zip(&sy.mean).map(|(a, b)| *a - *b).collect();
            let dsd: Vec<T> = sz.std.iter().zip(&sy.std).map(|(a, b)| *a - *b).collect();
            let (lm, gm) = norm_with_grad(&dmu);
            let (ls, gs) = norm_with_grad(&dsd);
            total = total + lm + ls;

            let code = region.code();
            let inv_cnt = T::lit(1.0 / sz.pixel_count as f64);
            for ch in 0..feat_z.c {
                let plane = feat_z.plane_slice(ch, n);
                let (mu, sd) = (sz.mean[ch], sz.std[ch]);
                let g_mu = gm[ch] * inv_cnt * inv_batch;
                let g_sd = if sd > T::zero() {
                    gs[ch] * inv_cnt / sd * inv_batch
                } else {
                    T::zero()
                };
                let base = grad.idx(ch, n, 0, 0);
                for (i, &l) in labels_x[n].labels().iter().enumerate() {
                    if l == code {
                        grad.data[base + i] = grad.data[base + i] + g_mu + g_sd * (plane[i] - mu);
                    }
                }
            }
        }
    }
    Ok((total * inv_batch, grad))
}

pub fn sat_loss<T: Scalar>(
    feat_z: &Tensor<T>,
    labels_x: &[RegionLabelMap],
    feat_y: &Tensor<T>,
    labels_y: &[RegionLabelMap],
) -> Result<T> {
    Ok(sat_loss_grad(feat_z, labels_x, feat_y, labels_y)?.0)
}
