use crate::error::{Result, SamcError};
use crate::nn::{instance_norm, instance_norm_backward, Activation, Conv2d, ParamBuilder, Params};
use crate::tensor::{Scalar, Tensor};

use super::unet::MAX_CHANNELS;

const SLOPE: f64 = 0.2;

/// Convolutional patch discriminator: `blocks` stride-2 4x4 convolutions
/// followed by a 3x3 projection to one sigmoid probability per patch.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchDiscriminator {
    pub base_channels: usize,
    blocks: Vec<Conv2d>,
    out: Conv2d,
}

struct Block<T> {
    input: Tensor<T>,
    normed: Tensor<T>,
    inv_std: Option<Vec<T>>,
    out: Tensor<T>,
}

pub struct DiscTrace<T> {
    blocks: Vec<Block<T>>,
    logits: Tensor<T>,
    /// `[1, N, H / 2^blocks, W / 2^blocks]` probabilities.
    pub scores: Tensor<T>,
}

impl PatchDiscriminator {
    pub fn new<T: Scalar>(base_channels: usize, blocks: usize, seed: u64) -> Result<(Self, Params<T>)> {
        if blocks == 0 {
            return Err(SamcError::Config("discriminator needs at least one block".into()));
        }
        let mut pb = ParamBuilder::new(seed);
        let mut convs = Vec::with_capacity(blocks);
        let mut cin = 3;
        for k in 0..blocks {
            let cout = (base_channels << k).min(MAX_CHANNELS);
            convs.push(Conv2d::new(&mut pb, &format!("block{k}"), cin, cout, 4, 2, 1));
            cin = cout;
        }
        let out = Conv2d::new(&mut pb, "out", cin, 1, 3, 1, 1);
        Ok((
            PatchDiscriminator {
                base_channels,
                blocks: convs,
                out,
            },
            pb.finish(),
        ))
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn output_dim(&self, input: usize) -> usize {
        self.blocks.iter().fold(input, |d, c| c.out_dim(d))
    }

    pub fn fingerprint(&self) -> String {
        format!(
            "patchdisc(base={},blocks={})",
            self.base_channels,
            self.blocks.len()
        )
    }

    pub fn forward<T: Scalar>(&self, p: &Params<T>, x: &Tensor<T>) -> Result<DiscTrace<T>> {
        if x.c != 3 || x.h >> self.blocks.len() == 0 || x.w >> self.blocks.len() == 0 {
            return Err(SamcError::Shape(format!(
                "discriminator with {} blocks cannot take {}x{}x{}",
                self.blocks.len(),
                x.c,
                x.h,
                x.w
            )));
        }
        let mut h = x.clone();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (k, conv) in self.blocks.iter().enumerate() {
            let pre = conv.forward(p, &h);
            let (normed, inv_std) = if k > 0 {
                let (n, s) = instance_norm(&pre);
                (n, Some(s))
            } else {
                (pre, None)
            };
            let out = Activation::LeakyRelu(SLOPE).forward(&normed);
            blocks.push(Block {
                input: h,
                normed,
                inv_std,
                out: out.clone(),
            });
            h = out;
        }
        let logits = self.out.forward(p, &h);
        let scores = Activation::Sigmoid.forward(&logits);
        Ok(DiscTrace {
            blocks,
            logits,
            scores,
        })
    }

    /// Back-propagate a gradient w.r.t. the patch scores.
    pub fn backward<T: Scalar>(
        &self,
        p: &Params<T>,
        trace: &DiscTrace<T>,
        d_scores: &Tensor<T>,
        mut grads: Option<&mut Params<T>>,
        want_dx: bool,
    ) -> Option<Tensor<T>> {
        let d_logits = Activation::Sigmoid.backward(&trace.logits, &trace.scores, d_scores);
        let last = &trace.blocks[trace.blocks.len() - 1].out;
        let mut d = self.out.backward(p, last, &d_logits, grads.as_deref_mut(), true);
        for k in (0..self.blocks.len()).rev() {
            let blk = &trace.blocks[k];
            let d_norm = Activation::LeakyRelu(SLOPE).backward(&blk.normed, &blk.out, d.as_ref().unwrap());
            let d_conv = match &blk.inv_std {
                Some(s) => instance_norm_backward(&blk.normed, s, &d_norm),
                None => d_norm,
            };
            d = self.blocks[k].backward(p, &blk.input, &d_conv, grads.as_deref_mut(), k > 0 || want_dx);
        }
        d
    }
}
