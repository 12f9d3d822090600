use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SamcError};
use crate::image::{images_to_tensor, ImageTensor};
use crate::regions::RegionLabelMap;
use crate::tensor::{Scalar, Tensor};

use super::manifest::PairedSample;

/// A preprocessed sample decoded into memory.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedSample {
    pub identity: String,
    pub x: ImageTensor,
    pub w: ImageTensor,
    pub y: ImageTensor,
    pub labels_x: RegionLabelMap,
    pub labels_y: RegionLabelMap,
}

impl LoadedSample {
    pub fn load(s: &PairedSample) -> Result<Self> {
        let ctx = |e: SamcError| SamcError::Config(format!("sample `{}`: {e}", s.identity));
        let cache = |p: &Option<std::path::PathBuf>, what: &str| {
            p.clone()
                .ok_or_else(|| SamcError::Config(format!("sample `{}` has no cached {what}; preprocess first", s.identity)))
        };
        let x = ImageTensor::load_png(&s.x).map_err(ctx)?;
        let w = ImageTensor::load_png(&cache(&s.w, "W")?).map_err(ctx)?;
        let y = ImageTensor::load_png(&s.y).map_err(ctx)?;
        let labels_x = RegionLabelMap::load_png(&cache(&s.labels_x, "labels_x")?).map_err(ctx)?;
        let labels_y = RegionLabelMap::load_png(&cache(&s.labels_y, "labels_y")?).map_err(ctx)?;
        let dims = (x.height(), x.width());
        let same = [(w.height(), w.width()), (y.height(), y.width()), (labels_x.height(), labels_x.width()), (labels_y.height(), labels_y.width())]
            .iter()
            .all(|d| *d == dims);
        if !same {
            return Err(SamcError::Shape(format!("sample `{}`: cached arrays differ in size from X", s.identity)));
        }
        Ok(LoadedSample {
            identity: s.identity.clone(),
            x,
            w,
            y,
            labels_x,
            labels_y,
        })
    }
}

/// Stacked batch tensors `[3, N, H, W]` plus per-sample label maps.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub identities: Vec<String>,
    pub x: Tensor<T>,
    pub w: Tensor<T>,
    pub y: Tensor<T>,
    pub labels_x: Vec<RegionLabelMap>,
    pub labels_y: Vec<RegionLabelMap>,
}

impl<T: Scalar> Batch<T> {
    pub fn from_samples(samples: &[&LoadedSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(SamcError::Shape("empty batch".into()));
        }
        let stack = |f: fn(&LoadedSample) -> &ImageTensor| {
            let v: Vec<&ImageTensor> = samples.iter().map(|s| f(s)).collect();
            images_to_tensor(&v)
        };
        Ok(Batch {
            identities: samples.iter().map(|s| s.identity.clone()).collect(),
            x: stack(|s| &s.x)?,
            w: stack(|s| &s.w)?,
            y: stack(|s| &s.y)?,
            labels_x: samples.iter().map(|s| s.labels_x.clone()).collect(),
            labels_y: samples.iter().map(|s| s.labels_y.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.identities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identities.is_empty()
    }
}

/// Sample indices of each batch in epoch `epoch`: a seeded shuffle of
/// `0..count` cut into full batches (the remainder is dropped).
pub fn batch_order(count: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    if batch_size == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    idx.shuffle(&mut rng);
    idx.chunks_exact(batch_size).map(<[usize]>::to_vec).collect()
}

/// Load every preprocessed sample and cut one epoch into batches.
pub fn make_batches<T: Scalar>(samples: &[PairedSample], batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Batch<T>>> {
    if batch_size == 0 {
        return Err(SamcError::Config("batch size must be at least 1".into()));
    }
    let loaded = samples.iter().map(LoadedSample::load).collect::<Result<Vec<_>>>()?;
    batch_order(loaded.len(), batch_size, seed, epoch)
        .iter()
        .map(|b| Batch::from_samples(&b.iter().map(|&i| &loaded[i]).collect::<Vec<_>>()))
        .collect()
}
