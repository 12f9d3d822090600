//! Frozen identity feature extractor.
//!
//! Two sources are supported: a built-in fixed-seed CNN, and an external
//! pretrained network with the same four-block conv layout loaded from a
//! container file. Either way the parameters are read-only; backward passes
//! only produce input gradients.

use std::path::{Path, PathBuf};

use crate::error::{Result, SamcError};
use crate::nn::{Activation, Conv2d, NamedArray, ParamBuilder, Params};
use crate::store::Container;
use crate::tensor::{Scalar, Tensor};

pub const EMBEDDING_DIM: usize = 256;
pub const TOY_EXTRACTOR_SEED: u64 = 0x5eed_f00d;
const SLOPE: f64 = 0.2;
/// Index of the block whose activations feed the texture loss.
const FEATURE_BLOCK: usize = 1;
const STRIDES: [usize; 4] = [2, 1, 2, 2];
const TOY_CHANNELS: [usize; 4] = [16, 32, 64, EMBEDDING_DIM];
const TOY_KERNELS: [usize; 4] = [4, 3, 4, 4];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExtractorSource {
    Toy { seed: u64 },
    File(PathBuf),
}

impl Default for ExtractorSource {
    fn default() -> Self {
        ExtractorSource::Toy {
            seed: TOY_EXTRACTOR_SEED,
        }
    }
}

impl ExtractorSource {
    /// `toy`, `toy:<seed>` or a path to an extractor container.
    pub fn parse(s: &str) -> Self {
        match s {
            "toy" => ExtractorSource::default(),
            _ => match s.strip_prefix("toy:").and_then(|v| v.parse().ok()) {
                Some(seed) => ExtractorSource::Toy { seed },
                None => ExtractorSource::File(PathBuf::from(s)),
            },
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ExtractorSource::Toy { seed } => format!("toy:{seed}"),
            ExtractorSource::File(p) => p.display().to_string(),
        }
    }
}

/// Channel count and spatial size of the texture-feature layer for an input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug)]
pub struct Extractor<T> {
    layers: Vec<Conv2d>,
    params: Params<T>,
    source: ExtractorSource,
}

pub struct ExtractorTrace<T> {
    inputs: Vec<Tensor<T>>,
    pre: Vec<Tensor<T>>,
    /// Output of the feature block, `[C, N, H', W']`.
    pub features: Tensor<T>,
    /// `N x EMBEDDING_DIM`, row-major.
    pub embedding: Vec<T>,
}

impl<T: Scalar> Extractor<T> {
    pub fn toy(seed: u64) -> Self {
        let mut pb = ParamBuilder::new(seed);
        let mut layers = Vec::new();
        let mut cin = 3;
        for (i, ((&cout, &k), &s)) in TOY_CHANNELS.iter().zip(&TOY_KERNELS).zip(&STRIDES).enumerate() {
            let pad = if s == 2 { 1 } else { k / 2 };
            // He initialisation keeps activations O(1) through the stack.
            let std = (2.0 / (cin * k * k) as f64).sqrt();
            let weight = pb.normal(format!("conv{i}.weight"), &[cout, cin, k, k], std);
            let bias = pb.normal(format!("conv{i}.bias"), &[cout], 0.1);
            layers.push(Conv2d {
                cin,
                cout,
                kernel: k,
                stride: s,
                pad,
                weight,
                bias,
            });
            cin = cout;
        }
        Extractor {
            layers,
            params: pb.finish(),
            source: ExtractorSource::Toy { seed },
        }
    }

    /// Load an external network: a container of kind `extractor` holding
    /// `conv0..conv3` weights/biases in the four-block layout.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(SamcError::ExtractorUnavailable(format!(
                "{} does not exist",
                path.display()
            )));
        }
        let c = Container::load(path)?;
        if c.kind != "extractor" {
            return Err(SamcError::ExtractorUnavailable(format!(
                "{} holds a `{}` container, not an extractor",
                path.display(),
                c.kind
            )));
        }
        let mut layers = Vec::new();
        let mut arrays = Vec::new();
        let mut cin = 3;
        for (i, &s) in STRIDES.iter().enumerate() {
            let find = |n: String| {
                c.arrays.iter().find(|a| a.name == n).cloned().ok_or_else(|| {
                    SamcError::ExtractorUnavailable(format!("{} lacks array `{n}`", path.display()))
                })
            };
            let w = find(format!("conv{i}.weight"))?;
            let b = find(format!("conv{i}.bias"))?;
            let [cout, wc, k, k2] = w.shape[..] else {
                return Err(SamcError::ExtractorUnavailable(format!("conv{i}.weight is not 4-d")));
            };
            if wc != cin || k != k2 || b.shape != [cout] || (i == STRIDES.len() - 1 && cout != EMBEDDING_DIM) {
                return Err(SamcError::ExtractorUnavailable(format!(
                    "conv{i} has incompatible shape {:?}",
                    w.shape
                )));
            }
            let pad = if s == 2 { 1 } else { k / 2 };
            layers.push(Conv2d {
                cin,
                cout,
                kernel: k,
                stride: s,
                pad,
                weight: 2 * i,
                bias: 2 * i + 1,
            });
            arrays.push(w);
            arrays.push(b);
            cin = cout;
        }
        let params = Params::<f32> { arrays }.cast();
        Ok(Extractor {
            layers,
            params,
            source: ExtractorSource::File(path.to_path_buf()),
        })
    }

    pub fn from_source(source: &ExtractorSource) -> Result<Self> {
        match source {
            ExtractorSource::Toy { seed } => Ok(Self::toy(*seed)),
            ExtractorSource::File(p) => Self::load(p),
        }
    }

    /// Write the parameters as an extractor container readable by [`Extractor::load`].
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut c = Container::new("extractor");
        c.set_meta("source", self.source.describe());
        for a in &self.params.arrays {
            c.push_array(
                a.name.clone(),
                a.shape.clone(),
                a.data.iter().map(|v| v.as_f64() as f32).collect(),
            );
        }
        c.save(path)
    }

    pub fn source(&self) -> &ExtractorSource {
        &self.source
    }

    pub fn params(&self) -> &Params<T> {
        &self.params
    }

    pub fn fingerprint(&self) -> String {
        format!("extractor({})", self.source.describe())
    }

    pub fn cast<U: Scalar>(&self) -> Extractor<U> {
        Extractor {
            layers: self.layers.clone(),
            params: self.params.cast(),
            source: self.source.clone(),
        }
    }

    pub fn feature_geometry(&self, height: usize, width: usize) -> FeatureGeometry {
        let (mut h, mut w) = (height, width);
        for l in &self.layers[..=FEATURE_BLOCK] {
            h = l.out_dim(h);
            w = l.out_dim(w);
        }
        FeatureGeometry {
            channels: self.layers[FEATURE_BLOCK].cout,
            height: h,
            width: w,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        EMBEDDING_DIM
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<ExtractorTrace<T>> {
        if x.c != 3 {
            return Err(SamcError::Shape(format!("extractor expects 3 channels, got {}", x.c)));
        }
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut features = None;
        for (i, l) in self.layers.iter().enumerate() {
            if h.h < l.kernel.saturating_sub(2 * l.pad) || h.h == 0 {
                return Err(SamcError::Shape(format!("input {}x{} too small for extractor", x.h, x.w)));
            }
            let z = l.forward(&self.params, &h);
            let a = if i == last {
                z.clone()
            } else {
                Activation::LeakyRelu(SLOPE).forward(&z)
            };
            inputs.push(h);
            pre.push(z);
            if i == FEATURE_BLOCK {
                features = Some(a.clone());
            }
            h = a;
        }
        let p = T::lit(1.0 / h.plane() as f64);
        let mut embedding = vec![T::zero(); x.n * EMBEDDING_DIM];
        for c in 0..EMBEDDING_DIM {
            for n in 0..x.n {
                embedding[n * EMBEDDING_DIM + c] = h.plane_slice(c, n).iter().copied().sum::<T>() * p;
            }
        }
        Ok(ExtractorTrace {
            inputs,
            pre,
            features: features.expect("feature block"),
            embedding,
        })
    }

    /// Input gradient from gradients on the embedding and/or the feature
    /// block. Parameters never receive gradients.
    pub fn backward(
        &self,
        trace: &ExtractorTrace<T>,
        d_embedding: Option<&[T]>,
        d_features: Option<&Tensor<T>>,
    ) -> Tensor<T> {
        let last = self.layers.len() - 1;
        let top = &trace.pre[last];
        let mut d = Tensor::zeros(top.c, top.n, top.h, top.w);
        if let Some(de) = d_embedding {
            let p = T::lit(1.0 / top.plane() as f64);
            for c in 0..top.c {
                for n in 0..top.n {
                    let g = de[n * EMBEDDING_DIM + c] * p;
                    d.plane_slice_mut(c, n).fill(g);
                }
            }
        }
        let start = if d_embedding.is_some() { last } else { FEATURE_BLOCK };
        if d_embedding.is_none() {
            let f = &trace.pre[FEATURE_BLOCK];
            d = Tensor::zeros(f.c, f.n, f.h, f.w);
        }
        for i in (0..=start).rev() {
            if i == FEATURE_BLOCK {
                if let Some(df) = d_features {
                    d.add_assign(df);
                }
            }
            let dz = if i == last {
                d
            } else {
                let a = Activation::LeakyRelu(SLOPE);
                a.backward(&trace.pre[i], &trace.pre[i], &d)
            };
            d = self.layers[i]
                .backward(&self.params, &trace.inputs[i], &dz, None, true)
                .expect("input gradient");
        }
        d
    }
}

impl<T: Scalar> Extractor<T> {
    /// Raw parameter arrays, for external tooling that wants to inspect them.
    pub fn arrays(&self) -> &[NamedArray<T>] {
        &self.params.arrays
    }
}
