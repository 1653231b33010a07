//! Learned regularization gradient: an Inception feature block, patch
//! embedding, height/width/channel token-mixing layers and patch expansion.

use ndauto::{Graph, Params, Real, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{arg, Result};
use crate::nn::{add_conv, add_linear, add_mlp, add_norm, add_prelu, Binder};

const P: &str = "mixer";

#[derive(Clone, Debug, PartialEq)]
pub struct MixerConfig {
    pub image_h: usize,
    pub image_w: usize,
    /// Patch size (patch-embedding kernel and stride).
    pub patch: usize,
    /// Embedding depth; must equal the sum of `branches`.
    pub dim: usize,
    pub layers: usize,
    /// Output channels of the four Inception branches: 1x1, 3x3, 5x5, pool.
    pub branches: [usize; 4],
    /// 1x1 reduction widths ahead of the 3x3 and 5x5 convolutions.
    pub reduce: [usize; 2],
    /// Hidden width of the height/width MLPs; `None` means 4x the token count
    /// along that axis.
    pub token_hidden: Option<usize>,
    /// Hidden width of the channel MLP; `None` means `4 * dim`.
    pub channel_hidden: Option<usize>,
}

impl MixerConfig {
    /// 256x256 input, `p = 4`, `d = 96`, two layers, branches 16/32/32/16.
    pub fn full_size() -> Self {
        Self {
            image_h: 256,
            image_w: 256,
            patch: 4,
            dim: 96,
            layers: 2,
            branches: [16, 32, 32, 16],
            reduce: [16, 16],
            token_hidden: None,
            channel_hidden: None,
        }
    }

    /// 64x64 input, `d = 24`, two layers.
    pub fn desk() -> Self {
        Self { image_h: 64, image_w: 64, dim: 24, branches: [4, 8, 8, 4], reduce: [4, 4], ..Self::full_size() }
    }

    /// Smallest useful configuration, for gradient checks.
    pub fn tiny(size: usize) -> Self {
        Self {
            image_h: size,
            image_w: size,
            dim: 12,
            layers: 1,
            branches: [2, 4, 4, 2],
            reduce: [2, 2],
            ..Self::full_size()
        }
    }

    pub fn with_image(mut self, h: usize, w: usize) -> Self {
        self.image_h = h;
        self.image_w = w;
        self
    }

    pub fn tokens(&self) -> (usize, usize) {
        (self.image_h / self.patch, self.image_w / self.patch)
    }

    pub fn height_hidden(&self) -> usize {
        self.token_hidden.unwrap_or(4 * self.tokens().0)
    }

    pub fn width_hidden(&self) -> usize {
        self.token_hidden.unwrap_or(4 * self.tokens().1)
    }

    pub fn channel_hidden(&self) -> usize {
        self.channel_hidden.unwrap_or(4 * self.dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.image_h % self.patch != 0 || self.image_w % self.patch != 0 {
            return Err(arg(format!(
                "image {}x{} is not divisible by patch size {}",
                self.image_h, self.image_w, self.patch
            )));
        }
        if self.branches.iter().sum::<usize>() != self.dim {
            return Err(arg(format!("branch widths {:?} do not sum to d = {}", self.branches, self.dim)));
        }
        if self.layers == 0 || self.branches.contains(&0) || self.reduce.contains(&0) {
            return Err(arg("mixer needs N >= 1 and nonzero branch widths"));
        }
        Ok(())
    }

    /// Parameter counts per block, from the layer shapes.
    pub fn param_counts(&self) -> ParamCounts {
        let conv = |o: usize, i: usize, k: usize| o * i * k * k + o;
        let [b1, b2, b3, b4] = self.branches;
        let [r3, r5] = self.reduce;
        let inception = conv(b1, 1, 1) + conv(r3, 1, 1) + conv(b2, r3, 3) + conv(r5, 1, 1) + conv(b3, r5, 5) + conv(b4, 1, 1);
        let inception_prelu = b1 + r3 + b2 + r5 + b3 + b4;
        let d = self.dim;
        let (th, tw) = self.tokens();
        let mlp = |w: usize, h: usize| w * h + h + h * w + w;
        let mixer_layer =
            2 * d + mlp(th, self.height_hidden()) + mlp(tw, self.width_hidden()) + 2 * d + mlp(d, self.channel_hidden());
        let pp = self.patch * self.patch;
        let patch_expand = d * pp * d + 2 * d + conv(1, d, 1);
        let patch_embed = conv(d, d, self.patch);
        ParamCounts {
            inception,
            inception_prelu,
            patch_embed,
            mixer_layer,
            patch_expand,
            total: inception + inception_prelu + patch_embed + self.layers * mixer_layer + patch_expand,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCounts {
    /// Convolution weights and biases of the Inception block.
    pub inception: usize,
    /// Per-channel PReLU slopes of the Inception block.
    pub inception_prelu: usize,
    pub patch_embed: usize,
    /// One token-mixing layer.
    pub mixer_layer: usize,
    pub patch_expand: usize,
    pub total: usize,
}

/// Name of the final 1x1 convolution (zeroed for a cold start).
pub const HEAD: &str = "mixer.expand.proj";

/// Adds all mixer tensors under the `mixer.` prefix.
///
/// Convolutions use Xavier-uniform weights, linear layers truncated-normal
/// weights (std 0.02, cut at 2 std), all biases start at zero.
pub fn init_mixer<T: Real>(cfg: &MixerConfig, params: &mut Params<T>, seed: u64) -> Result<()> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [b1, b2, b3, b4] = cfg.branches;
    let [r3, r5] = cfg.reduce;
    let inc = format!("{P}.inception");
    add_conv(params, &format!("{inc}.b1.conv"), [b1, 1, 1, 1], &mut rng)?;
    add_prelu(params, &format!("{inc}.b1.act"), b1)?;
    add_conv(params, &format!("{inc}.b2.reduce"), [r3, 1, 1, 1], &mut rng)?;
    add_prelu(params, &format!("{inc}.b2.reduce_act"), r3)?;
    add_conv(params, &format!("{inc}.b2.conv"), [b2, r3, 3, 3], &mut rng)?;
    add_prelu(params, &format!("{inc}.b2.act"), b2)?;
    add_conv(params, &format!("{inc}.b3.reduce"), [r5, 1, 1, 1], &mut rng)?;
    add_prelu(params, &format!("{inc}.b3.reduce_act"), r5)?;
    add_conv(params, &format!("{inc}.b3.conv"), [b3, r5, 5, 5], &mut rng)?;
    add_prelu(params, &format!("{inc}.b3.act"), b3)?;
    add_conv(params, &format!("{inc}.b4.conv"), [b4, 1, 1, 1], &mut rng)?;
    add_prelu(params, &format!("{inc}.b4.act"), b4)?;

    let d = cfg.dim;
    add_conv(params, &format!("{P}.embed"), [d, d, cfg.patch, cfg.patch], &mut rng)?;
    let (th, tw) = cfg.tokens();
    for l in 0..cfg.layers {
        let lp = format!("{P}.layer{l}");
        add_norm(params, &format!("{lp}.norm1"), d)?;
        add_mlp(params, &format!("{lp}.height"), th, cfg.height_hidden(), &mut rng)?;
        add_mlp(params, &format!("{lp}.width"), tw, cfg.width_hidden(), &mut rng)?;
        add_norm(params, &format!("{lp}.norm2"), d)?;
        add_mlp(params, &format!("{lp}.channel"), d, cfg.channel_hidden(), &mut rng)?;
    }
    let pp = cfg.patch * cfg.patch;
    add_linear(params, &format!("{P}.expand.linear"), pp * d, d, false, &mut rng)?;
    add_norm(params, &format!("{P}.expand.norm"), d)?;
    add_conv(params, HEAD, [1, d, 1, 1], &mut rng)?;
    Ok(())
}

fn branch<T: Real>(g: &mut Graph<T>, b: &mut Binder<'_, T>, x: Var, name: &str, pad: usize, reduce: bool) -> Result<Var> {
    let mut h = x;
    if reduce {
        h = b.conv(g, h, &format!("{name}.reduce"), 1, 0)?;
        h = b.prelu(g, h, &format!("{name}.reduce_act"))?;
    }
    h = b.conv(g, h, &format!("{name}.conv"), 1, pad)?;
    b.prelu(g, h, &format!("{name}.act"))
}

/// Inception block: `[1, 1, H, W] -> [1, d, H, W]`.
pub fn inception<T: Real>(g: &mut Graph<T>, b: &mut Binder<'_, T>, x: Var) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 4 || shape[1] != 1 {
        return Err(arg(format!("inception expects a single-channel NCHW input, got {shape:?}")));
    }
    let inc = format!("{P}.inception");
    let o1 = branch(g, b, x, &format!("{inc}.b1"), 0, false)?;
    let o2 = branch(g, b, x, &format!("{inc}.b2"), 1, true)?;
    let o3 = branch(g, b, x, &format!("{inc}.b3"), 2, true)?;
    let pooled = g.maxpool2d(x, 3, 1, 1)?;
    let o4 = branch(g, b, pooled, &format!("{inc}.b4"), 0, false)?;
    Ok(g.concat(&[o1, o2, o3, o4], 1)?)
}

/// One token-mixing layer on `[1, h', w', d]` tokens:
/// `u = e + W(H(LN(e)))`, `out = u + C(LN(u))`.
pub fn mixer_layer<T: Real>(g: &mut Graph<T>, b: &mut Binder<'_, T>, e: Var, layer: usize) -> Result<Var> {
    let lp = format!("{P}.layer{layer}");
    let n = b.layer_norm(g, e, &format!("{lp}.norm1"))?;
    // [b, h, w, c] -> [b, c, w, h]: mix along height
    let t = g.permute(n, &[0, 3, 2, 1])?;
    let t = b.mlp(g, t, &format!("{lp}.height"))?;
    // [b, c, w, h] -> [b, c, h, w]: mix along width
    let t = g.permute(t, &[0, 1, 3, 2])?;
    let t = b.mlp(g, t, &format!("{lp}.width"))?;
    let t = g.permute(t, &[0, 2, 3, 1])?;
    let u = g.add(e, t)?;
    let n = b.layer_norm(g, u, &format!("{lp}.norm2"))?;
    let c = b.mlp(g, n, &format!("{lp}.channel"))?;
    Ok(g.add(u, c)?)
}

/// Patch embedding: conv (kernel = stride = p) then `bchw -> bhwc`.
pub fn patch_embed<T: Real>(g: &mut Graph<T>, b: &mut Binder<'_, T>, f: Var, cfg: &MixerConfig) -> Result<Var> {
    let e = b.conv(g, f, &format!("{P}.embed"), cfg.patch, 0)?;
    Ok(g.permute(e, &[0, 2, 3, 1])?)
}

/// Patch expansion: linear `d -> p^2 d`, each token unfolded into a `p x p`
/// block of `d`-vectors, layer norm, then a 1x1 conv to one channel.
pub fn patch_expand<T: Real>(g: &mut Graph<T>, b: &mut Binder<'_, T>, e: Var, cfg: &MixerConfig) -> Result<Var> {
    let (th, tw) = cfg.tokens();
    let (p, d) = (cfg.patch, cfg.dim);
    let v = b.linear(g, e, &format!("{P}.expand.linear"), false)?;
    let v = g.reshape(v, &[1, th, tw, p, p, d])?;
    let v = g.permute(v, &[0, 1, 3, 2, 4, 5])?;
    let v = g.reshape(v, &[1, th * p, tw * p, d])?;
    let v = b.layer_norm(g, v, &format!("{P}.expand.norm"))?;
    let v = g.permute(v, &[0, 3, 1, 2])?;
    b.conv(g, v, HEAD, 1, 0)
}

/// Full network `G(x)`: `[1, 1, H, W] -> [1, 1, H, W]`.
pub fn mixer_forward<T: Real>(g: &mut Graph<T>, b: &mut Binder<'_, T>, x: Var, cfg: &MixerConfig) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    if shape != [1, 1, cfg.image_h, cfg.image_w] {
        return Err(arg(format!(
            "mixer configured for [1, 1, {}, {}], got {shape:?}",
            cfg.image_h, cfg.image_w
        )));
    }
    let f = inception(g, b, x)?;
    let mut e = patch_embed(g, b, f, cfg)?;
    for l in 0..cfg.layers {
        e = mixer_layer(g, b, e, l)?;
    }
    patch_expand(g, b, e, cfg)
}
