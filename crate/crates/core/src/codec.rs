//! Latent gradient encoder and direction decoder.
//!
//! The encoder runs `k` stacks of [3x3 conv, instance norm, PReLU, 2x2 max
//! pool] and a final 1x1 conv to one channel, shrinking `h x w` by `2^k` per
//! axis. The decoder mirrors it with [2x2 stride-2 transposed conv, instance
//! norm, PReLU] stacks and a final 1x1 conv.

use ndauto::{Graph, Params, Real, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{arg, Result};
use crate::nn::{add_conv, add_conv_t, add_norm, add_prelu, Binder};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodecConfig {
    /// Number of down/up-sampling stacks.
    pub stacks: usize,
    /// Feature channels inside every stack.
    pub channels: usize,
}

impl CodecConfig {
    pub fn new(stacks: usize) -> Self {
        Self { stacks, channels: 32 }
    }

    pub fn factor(&self) -> usize {
        1 << self.stacks
    }

    /// Latent grid for an `h x w` image.
    pub fn latent_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let f = self.factor();
        if h % f != 0 || w % f != 0 || h < f || w < f {
            return Err(arg(format!("image {h}x{w} is not divisible by the encoder factor {f}")));
        }
        Ok((h / f, w / f))
    }

    /// Entries of the dense latent inverse Hessian for an `h x w` image.
    pub fn hessian_entries(&self, h: usize, w: usize) -> Result<usize> {
        let (lh, lw) = self.latent_dims(h, w)?;
        Ok((lh * lw) * (lh * lw))
    }
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self::new(2)
    }
}

/// Name of the decoder's final 1x1 convolution.
pub const DECODER_HEAD: &str = "codec.dec.out";

/// Adds encoder and decoder tensors (Xavier-uniform weights, zero biases).
pub fn init_codec<T: Real>(cfg: &CodecConfig, params: &mut Params<T>, seed: u64) -> Result<()> {
    if cfg.stacks == 0 || cfg.channels == 0 {
        return Err(arg("codec needs at least one stack and one channel"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = cfg.channels;
    for i in 0..cfg.stacks {
        let cin = if i == 0 { 1 } else { c };
        let p = format!("codec.enc.{i}");
        add_conv(params, &format!("{p}.conv"), [c, cin, 3, 3], &mut rng)?;
        add_norm(params, &format!("{p}.norm"), c)?;
        add_prelu(params, &format!("{p}.act"), c)?;
    }
    add_conv(params, "codec.enc.out", [1, c, 1, 1], &mut rng)?;
    for i in 0..cfg.stacks {
        let cin = if i == 0 { 1 } else { c };
        let p = format!("codec.dec.{i}");
        add_conv_t(params, &format!("{p}.conv"), [cin, c, 2, 2], &mut rng)?;
        add_norm(params, &format!("{p}.norm"), c)?;
        add_prelu(params, &format!("{p}.act"), c)?;
    }
    add_conv(params, DECODER_HEAD, [1, c, 1, 1], &mut rng)?;
    Ok(())
}

/// `[1, 1, h, w] -> [1, 1, h / 2^k, w / 2^k]`.
pub fn encode<T: Real>(g: &mut Graph<T>, b: &mut Binder<'_, T>, x: Var, cfg: &CodecConfig) -> Result<Var> {
    let s = g.shape(x).to_vec();
    if s.len() != 4 || s[1] != 1 {
        return Err(arg(format!("encoder expects [1, 1, h, w], got {s:?}")));
    }
    cfg.latent_dims(s[2], s[3])?;
    let mut h = x;
    for i in 0..cfg.stacks {
        let p = format!("codec.enc.{i}");
        h = b.conv(g, h, &format!("{p}.conv"), 1, 1)?;
        h = b.instance_norm(g, h, &format!("{p}.norm"))?;
        h = b.prelu(g, h, &format!("{p}.act"))?;
        h = g.maxpool2d(h, 2, 2, 0)?;
    }
    b.conv(g, h, "codec.enc.out", 1, 0)
}

/// `[1, 1, l_h, l_w] -> [1, 1, l_h 2^k, l_w 2^k]`.
pub fn decode<T: Real>(g: &mut Graph<T>, b: &mut Binder<'_, T>, s: Var, cfg: &CodecConfig) -> Result<Var> {
    let mut h = s;
    for i in 0..cfg.stacks {
        let p = format!("codec.dec.{i}");
        h = b.conv_t(g, h, &format!("{p}.conv"), 2)?;
        h = b.instance_norm(g, h, &format!("{p}.norm"))?;
        h = b.prelu(g, h, &format!("{p}.act"))?;
    }
    b.conv(g, h, DECODER_HEAD, 1, 0)
}
