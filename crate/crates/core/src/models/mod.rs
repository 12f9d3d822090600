//! Generator, attention module, patch discriminator and the frozen identity
//! extractor.

mod discriminator;
mod extractor;
mod unet;

pub use discriminator::{DiscTrace, PatchDiscriminator};
pub use extractor::{
    Extractor, ExtractorSource, ExtractorTrace, FeatureGeometry, EMBEDDING_DIM, TOY_EXTRACTOR_SEED,
};
pub use unet::{unet_depth, Head, UNet, UNetTrace, MAX_CHANNELS};

use crate::error::{Result, SamcError};
use crate::image::{images_to_tensor, tensor_to_attention, tensor_to_images, AttentionMap, ImageTensor};
use crate::nn::Params;
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_BASE_CHANNELS: usize = 32;
pub const DEFAULT_DISC_BLOCKS: usize = 4;

/// Architecture of the three trainable networks.
#[derive(Clone, Debug, PartialEq)]
pub struct Networks {
    pub generator: UNet,
    pub attention: UNet,
    pub discriminator: PatchDiscriminator,
}

/// Parameters of the three trainable networks.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub g: Params<T>,
    pub a: Params<T>,
    pub d: Params<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn all_finite(&self) -> bool {
        self.g.all_finite() && self.a.all_finite() && self.d.all_finite()
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            g: self.g.zeros_like(),
            a: self.a.zeros_like(),
            d: self.d.zeros_like(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            g: self.g.cast(),
            a: self.a.cast(),
            d: self.d.cast(),
        }
    }
}

/// Per-network initialisation seeds derived from one run seed.
fn sub_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k.wrapping_mul(0xbf58_476d_1ce4_e5b9)) ^ k
}

impl Networks {
    pub fn new<T: Scalar>(
        size: usize,
        base_channels: usize,
        disc_blocks: usize,
        seed: u64,
    ) -> Result<(Self, ModelParams<T>)> {
        let (generator, g) = UNet::new(size, base_channels, Head::Residual, sub_seed(seed, 1))?;
        let (attention, a) = UNet::new(size, base_channels, Head::Attention, sub_seed(seed, 2))?;
        let (discriminator, d) = PatchDiscriminator::new(base_channels, disc_blocks, sub_seed(seed, 3))?;
        Ok((
            Networks {
                generator,
                attention,
                discriminator,
            },
            ModelParams { g, a, d },
        ))
    }

    pub fn image_size(&self) -> usize {
        self.generator.size
    }

    /// Identifies everything a checkpoint's arrays depend on.
    pub fn fingerprint(&self, extractor: &str) -> String {
        format!(
            "G={};A={};D={};E={}",
            self.generator.fingerprint(),
            self.attention.fingerprint(),
            self.discriminator.fingerprint(),
            extractor
        )
    }

    pub fn generate<T: Scalar>(&self, p: &ModelParams<T>, x: &Tensor<T>) -> Result<GeneratorTrace<T>> {
        let unet = self.generator.forward(&p.g, x)?;
        Ok(GeneratorTrace::new(x, unet))
    }

    pub fn attend<T: Scalar>(&self, p: &ModelParams<T>, x: &Tensor<T>) -> Result<UNetTrace<T>> {
        self.attention.forward(&p.a, x)
    }

    fn check_images(&self, images: &[&ImageTensor]) -> Result<()> {
        let s = self.image_size();
        match images.iter().find(|i| (i.height(), i.width()) != (s, s)) {
            Some(i) => Err(SamcError::Shape(format!(
                "image is {}x{} but the networks were built for {s}x{s}",
                i.height(),
                i.width()
            ))),
            None => Ok(()),
        }
    }

    /// De-makeup results `Z = G(X)` for each image.
    pub fn remove_makeup(&self, p: &ModelParams<f32>, images: &[&ImageTensor]) -> Result<Vec<ImageTensor>> {
        self.check_images(images)?;
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(INFERENCE_CHUNK) {
            let x = images_to_tensor::<f32>(chunk)?;
            out.extend(tensor_to_images(&self.generate(p, &x)?.z));
        }
        Ok(out)
    }

    /// Attention maps `A(X)` for each image.
    pub fn attention_maps(&self, p: &ModelParams<f32>, images: &[&ImageTensor]) -> Result<Vec<AttentionMap>> {
        self.check_images(images)?;
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(INFERENCE_CHUNK) {
            let x = images_to_tensor::<f32>(chunk)?;
            out.extend(tensor_to_attention(&self.attend(p, &x)?.output));
        }
        Ok(out)
    }
}

const INFERENCE_CHUNK: usize = 16;

/// Generator pass: `Z = clamp(X + residual, -1, 1)`.
pub struct GeneratorTrace<T> {
    pub unet: UNetTrace<T>,
    /// Mask of elements where the clamp was inactive.
    pass: Vec<bool>,
    pub z: Tensor<T>,
}

impl<T: Scalar> GeneratorTrace<T> {
    fn new(x: &Tensor<T>, unet: UNetTrace<T>) -> Self {
        let one = T::one();
        let mut z = x.clone();
        let mut pass = Vec::with_capacity(z.len());
        for (v, &r) in z.data.iter_mut().zip(&unet.output.data) {
            let s = *v + r;
            pass.push(s > -one && s < one);
            *v = s.max(-one).min(one);
        }
        GeneratorTrace { unet, pass, z }
    }

    /// Gradient w.r.t. the residual, given the gradient w.r.t. `Z`.
    pub fn residual_grad(&self, dz: &Tensor<T>) -> Tensor<T> {
        let mut d = dz.clone();
        for (g, &ok) in d.data.iter_mut().zip(&self.pass) {
            if !ok {
                *g = T::zero();
            }
        }
        d
    }
}
