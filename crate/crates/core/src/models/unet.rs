use crate::error::{Result, SamcError};
use crate::nn::{
    instance_norm, instance_norm_backward, upsample2x, upsample2x_backward, Activation, Conv2d,
    ParamBuilder, Params,
};
use crate::tensor::{Scalar, Tensor};

pub const MAX_CHANNELS: usize = 256;
const ENC_SLOPE: f64 = 0.2;

/// Output head of a U-net: the generator emits a 3-channel tanh residual, the
/// attention module a 1-channel sigmoid map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Residual,
    Attention,
}

impl Head {
    pub fn channels(self) -> usize {
        match self {
            Head::Residual => 3,
            Head::Attention => 1,
        }
    }

    fn activation(self) -> Activation {
        match self {
            Head::Residual => Activation::Tanh,
            Head::Attention => Activation::Sigmoid,
        }
    }
}

/// Encoder depth for a square input of side `size`: `log2(size) - 2`, so the
/// bottleneck is always 4x4.
pub fn unet_depth(size: usize) -> Result<usize> {
    if size < 8 || !size.is_power_of_two() {
        return Err(SamcError::ImageSize(size));
    }
    Ok(size.trailing_zeros() as usize - 2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UNet {
    pub size: usize,
    pub base_channels: usize,
    pub head_kind: Head,
    enc: Vec<Conv2d>,
    dec: Vec<Conv2d>,
    head: Conv2d,
}

struct NormAct<T> {
    input: Tensor<T>,
    normed: Tensor<T>,
    inv_std: Option<Vec<T>>,
    out: Tensor<T>,
}

/// Activations kept from a forward pass for the matching backward pass.
pub struct UNetTrace<T> {
    x: Tensor<T>,
    enc: Vec<NormAct<T>>,
    /// Decoder blocks in execution order (deepest first); `input` is the
    /// upsampled concatenation fed to the convolution.
    dec: Vec<NormAct<T>>,
    head_in: Tensor<T>,
    head_pre: Tensor<T>,
    pub output: Tensor<T>,
}

fn channels_at(base: usize, level: usize) -> usize {
    (base << level).min(MAX_CHANNELS)
}

impl UNet {
    pub fn new<T: Scalar>(size: usize, base_channels: usize, head_kind: Head, seed: u64) -> Result<(Self, Params<T>)> {
        let depth = unet_depth(size)?;
        let mut pb = ParamBuilder::new(seed);
        let mut enc = Vec::with_capacity(depth);
        let mut cin = 3;
        for k in 0..depth {
            let cout = channels_at(base_channels, k);
            enc.push(Conv2d::new(&mut pb, &format!("enc{k}"), cin, cout, 4, 2, 1));
            cin = cout;
        }
        let mut dec = Vec::with_capacity(depth);
        for k in (0..depth).rev() {
            let cin = if k == depth - 1 {
                channels_at(base_channels, k)
            } else {
                Self::dec_out(base_channels, k + 1) + channels_at(base_channels, k)
            };
            let cout = Self::dec_out(base_channels, k);
            dec.push(Conv2d::new(&mut pb, &format!("dec{k}"), cin, cout, 3, 1, 1));
        }
        let head = Conv2d::new(
            &mut pb,
            "head",
            Self::dec_out(base_channels, 0) + 3,
            head_kind.channels(),
            3,
            1,
            1,
        );
        let net = UNet {
            size,
            base_channels,
            head_kind,
            enc,
            dec,
            head,
        };
        Ok((net, pb.finish()))
    }

    fn dec_out(base: usize, level: usize) -> usize {
        channels_at(base, level.saturating_sub(1))
    }

    pub fn depth(&self) -> usize {
        self.enc.len()
    }

    pub fn head_layer(&self) -> &Conv2d {
        &self.head
    }

    pub fn fingerprint(&self) -> String {
        format!(
            "unet(size={},base={},depth={},head={:?})",
            self.size,
            self.base_channels,
            self.depth(),
            self.head_kind
        )
    }

    fn check_input<T: Scalar>(&self, x: &Tensor<T>) -> Result<()> {
        if x.c != 3 || x.h != x.w || unet_depth(x.h)? != self.depth() {
            return Err(SamcError::Shape(format!(
                "U-net built for 3x{s}x{s} input got {}x{}x{}",
                x.c,
                x.h,
                x.w,
                s = self.size
            )));
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, p: &Params<T>, x: &Tensor<T>) -> Result<UNetTrace<T>> {
        self.check_input(x)?;
        let mut enc = Vec::with_capacity(self.depth());
        let mut h = x.clone();
        for (k, conv) in self.enc.iter().enumerate() {
            let pre = conv.forward(p, &h);
            let (normed, inv_std) = if k > 0 {
                let (n, s) = instance_norm(&pre);
                (n, Some(s))
            } else {
                (pre, None)
            };
            let out = Activation::LeakyRelu(ENC_SLOPE).forward(&normed);
            enc.push(NormAct {
                input: h,
                normed,
                inv_std,
                out: out.clone(),
            });
            h = out;
        }
        let depth = self.depth();
        let mut dec: Vec<NormAct<T>> = Vec::with_capacity(depth);
        for (j, conv) in self.dec.iter().enumerate() {
            let level = depth - 1 - j;
            let cat = if j == 0 {
                enc[depth - 1].out.clone()
            } else {
                Tensor::concat_channels(&dec[j - 1].out, &enc[level].out)
            };
            let up = upsample2x(&cat);
            let (normed, inv_std) = instance_norm(&conv.forward(p, &up));
            let out = Activation::Silu.forward(&normed);
            dec.push(NormAct {
                input: up,
                normed,
                inv_std: Some(inv_std),
                out,
            });
        }
        let head_in = Tensor::concat_channels(&dec[depth - 1].out, x);
        let head_pre = self.head.forward(p, &head_in);
        let output = self.head_kind.activation().forward(&head_pre);
        Ok(UNetTrace {
            x: x.clone(),
            enc,
            dec,
            head_in,
            head_pre,
            output,
        })
    }

    /// Back-propagate `d_out` (gradient w.r.t. the head activation output).
    /// Accumulates parameter gradients into `grads` and returns the input
    /// gradient when `want_dx`.
    pub fn backward<T: Scalar>(
        &self,
        p: &Params<T>,
        trace: &UNetTrace<T>,
        d_out: &Tensor<T>,
        mut grads: Option<&mut Params<T>>,
        want_dx: bool,
    ) -> Option<Tensor<T>> {
        let depth = self.depth();
        let d_pre = self
            .head_kind
            .activation()
            .backward(&trace.head_pre, &trace.output, d_out);
        let d_head_in = self
            .head
            .backward(p, &trace.head_in, &d_pre, grads.as_deref_mut(), true)
            .expect("head input gradient");
        let dec_out_c = trace.dec[depth - 1].out.c;
        let (mut d_up_out, d_x_head) = d_head_in.split_channels(dec_out_c);

        // Gradients flowing into each encoder output from the skip path.
        let mut d_skip: Vec<Option<Tensor<T>>> = (0..depth).map(|_| None).collect();
        for j in (0..depth).rev() {
            let level = depth - 1 - j;
            let blk = &trace.dec[j];
            let d_norm = Activation::Silu.backward(&blk.normed, &blk.out, &d_up_out);
            let d_conv = instance_norm_backward(&blk.normed, blk.inv_std.as_ref().unwrap(), &d_norm);
            let d_up = self.dec[j]
                .backward(p, &blk.input, &d_conv, grads.as_deref_mut(), true)
                .expect("decoder input gradient");
            let d_cat = upsample2x_backward(&d_up);
            if j == 0 {
                d_skip[depth - 1] = Some(d_cat);
            } else {
                let prev_c = trace.dec[j - 1].out.c;
                let (d_prev, d_enc) = d_cat.split_channels(prev_c);
                d_skip[level] = Some(d_enc);
                d_up_out = d_prev;
            }
        }

        let mut d_h: Option<Tensor<T>> = None;
        for k in (0..depth).rev() {
            let blk = &trace.enc[k];
            let mut d_out_k = d_skip[k].take().expect("skip gradient");
            if let Some(d) = d_h.take() {
                d_out_k.add_assign(&d);
            }
            let d_norm = Activation::LeakyRelu(ENC_SLOPE).backward(&blk.normed, &blk.out, &d_out_k);
            let d_conv = match &blk.inv_std {
                Some(s) => instance_norm_backward(&blk.normed, s, &d_norm),
                None => d_norm,
            };
            let need_dx = k > 0 || want_dx;
            d_h = self.enc[k].backward(p, &blk.input, &d_conv, grads.as_deref_mut(), need_dx);
        }
        if !want_dx {
            return None;
        }
        let mut dx = d_h.expect("input gradient");
        dx.add_assign(&d_x_head);
        debug_assert!(dx.same_shape(&trace.x));
        Some(dx)
    }
}
