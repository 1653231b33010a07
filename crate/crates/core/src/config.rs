//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, no sections. Every key has a
//! default (see [`SCHEMA`]); unknown keys are rejected. Lists are
//! comma-separated. Angles are radians, lengths millimetres.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use tomo::{Filter, Geometry, NoiseConfig};

use crate::codec::CodecConfig;
use crate::error::{Error, Result};
use crate::mixer::MixerConfig;
use crate::train::{Scanner, TrainConfig};
use crate::unroll::{InitMode, PseudoInverse, UnrollConfig, UnrolledNet, UpdateRule};

/// `(key, default, description)`.
pub const SCHEMA: &[(&str, &str, &str)] = &[
    ("seed", "0", "master seed; noise, init and ood draw from named substreams of it"),
    ("geometry.beam", "parallel", "parallel | fan"),
    ("geometry.size", "64", "image side in pixels"),
    ("geometry.pixel_mm", "1.0", "pixel size (mm)"),
    ("geometry.views_full", "180", "views in the full (dense) scan"),
    ("geometry.views", "16", "measured views, uniformly subsampled from the full scan"),
    ("geometry.detectors", "96", "detector bins"),
    ("geometry.det_spacing_mm", "auto", "detector bin pitch (mm); auto fits the image diagonal (at least 1 mm for parallel beams)"),
    ("geometry.angle_start", "0", "first view angle (rad)"),
    ("geometry.angle_end", "auto", "end of the angular range (rad, exclusive); auto = pi parallel, 2 pi fan"),
    ("geometry.sad_mm", "600", "fan beam: source to rotation axis (mm)"),
    ("geometry.add_mm", "290", "fan beam: rotation axis to detector (mm)"),
    ("noise.poisson_n0", "1e6", "incident photons per ray; 0 disables Poisson noise"),
    ("noise.gauss_frac", "0.05", "Gaussian sigma as a fraction of mean |sinogram|"),
    ("noise.attenuation_cap", "4.0", "peak line integral after scaling, before Poisson sampling"),
    ("fbp.filter", "ram-lak", "ram-lak | hann"),
    ("recon.iterations", "20", "gd/qn iterations"),
    ("recon.lambda", "1.0", "gd/qn data-term weight"),
    ("recon.tv_mu", "0", "gd/qn smoothed-TV weight; 0 disables it"),
    ("recon.tv_delta", "0.01", "TV smoothing (attenuation units)"),
    ("recon.step_scale", "1.0", "gd step as a multiple of 1/L"),
    ("recon.line_search", "strong-wolfe", "qn line search: fixed | armijo | strong-wolfe"),
    ("unroll.iterations", "6", "unrolled iterations T"),
    ("unroll.pinv", "fbp", "fbp | adjoint, the operator used for x0 and inside the learned gradient"),
    ("unroll.rule", "latent-bfgs", "latent-bfgs | gradient-step"),
    ("unroll.curvature_eps", "1e-12", "latent pairs with |z's| below this skip the update"),
    ("unroll.init", "zero-decoder-head", "standard | zero-decoder-head | cold-start"),
    ("mixer.patch", "4", "patch size (pixels)"),
    ("mixer.dim", "24", "embedding depth, the sum of mixer.branches"),
    ("mixer.layers", "2", "mixer layers N"),
    ("mixer.branches", "4,8,8,4", "inception branch widths: 1x1, 3x3, 5x5, pool"),
    ("mixer.reduce", "4,4", "1x1 reductions before the 3x3 and 5x5 branches"),
    ("mixer.norm_eps", "1e-5", "layer/instance norm epsilon (fixed)"),
    ("codec.stacks", "2", "encoder stacks; each halves the latent side"),
    ("codec.channels", "32", "feature channels inside each stack"),
    ("train.images", "20", "procedural training phantoms"),
    ("train.epochs", "100", "passes over the training set"),
    ("train.lr", "1e-3", "AdamW learning rate"),
    ("train.weight_decay", "1e-2", "decoupled weight decay (not applied to lambda_t or PReLU slopes)"),
    ("train.lr_decay_factor", "0.1", "learning-rate multiplier after the decay epoch"),
    ("train.lr_decay_epoch", "80", "first epoch (0-based) at the decayed rate"),
    ("train.batch_size", "1", "images per step (only 1 is supported)"),
    ("train.max_steps", "0", "optimizer step cap (0 = run every epoch)"),
    ("eval.images", "8", "held-out phantoms"),
    ("eval.ms_ssim_levels", "5", "MS-SSIM scales"),
    ("ood.value", "1.0", "attenuation painted inside the injected circle"),
    ("ood.crop_pad", "4", "pixels added around the circle's bounding box for cropped scoring"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { values: SCHEMA.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect() }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    /// Defaults overlaid with the settings in `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| cfg_err(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(cfg_err(format!("unknown key `{key}`"))),
        }
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<'a>(&mut self, overrides: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| cfg_err(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key `{key}` missing from schema"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key);
        raw.parse().map_err(|_| cfg_err(format!("`{key}`: cannot parse `{raw}`")))
    }

    fn list<const N: usize>(&self, key: &str) -> Result<[usize; N]> {
        let items: Vec<usize> = self
            .raw(key)
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| cfg_err(format!("`{key}`: bad list item `{s}`"))))
            .collect::<Result<_>>()?;
        items.try_into().map_err(|_| cfg_err(format!("`{key}` needs {N} values")))
    }

    /// Resolved form: every key, in schema order, with its description.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, _, doc) in SCHEMA {
            let _ = writeln!(out, "# {doc}\n{k} = {}", self.raw(k));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    pub fn filter(&self) -> Result<Filter> {
        Ok(self.raw("fbp.filter").parse()?)
    }

    /// Full (dense) scan geometry.
    pub fn geometry(&self) -> Result<Geometry> {
        let size = self.get("geometry.size")?;
        let views = self.get("geometry.views_full")?;
        let det = self.get("geometry.detectors")?;
        let mut g = match self.raw("geometry.beam") {
            "parallel" => Geometry::parallel(size, views, det),
            "fan" => Geometry::fan(size, views, det, self.get("geometry.sad_mm")?, self.get("geometry.add_mm")?),
            other => return Err(cfg_err(format!("unknown beam `{other}`"))),
        };
        if self.raw("geometry.det_spacing_mm") != "auto" {
            g.det_spacing_mm = self.get("geometry.det_spacing_mm")?;
        }
        g.pixel_mm = self.get("geometry.pixel_mm")?;
        g.angle_start = self.get("geometry.angle_start")?;
        if self.raw("geometry.angle_end") != "auto" {
            g.angle_end = self.get("geometry.angle_end")?;
        }
        g.validate()?;
        Ok(g)
    }

    pub fn noise(&self) -> Result<NoiseConfig> {
        Ok(NoiseConfig {
            poisson_n0: self.get("noise.poisson_n0")?,
            gaussian_frac: self.get("noise.gauss_frac")?,
            attenuation_cap: self.get("noise.attenuation_cap")?,
        })
    }

    pub fn scanner(&self) -> Result<Scanner> {
        Ok(Scanner { full: self.geometry()?, n_views: self.get("geometry.views")?, noise: self.noise()? })
    }

    pub fn init_mode(&self) -> Result<InitMode> {
        match self.raw("unroll.init") {
            "standard" => Ok(InitMode::Standard),
            "zero-decoder-head" => Ok(InitMode::ZeroDecoderHead),
            "cold-start" => Ok(InitMode::ColdStart),
            other => Err(cfg_err(format!("unknown init `{other}`"))),
        }
    }

    pub fn net(&self) -> Result<UnrolledNet> {
        if self.get::<f64>("mixer.norm_eps")? != ndauto::NORM_EPS {
            return Err(cfg_err(format!("mixer.norm_eps is fixed at {}", ndauto::NORM_EPS)));
        }
        let size = self.get("geometry.size")?;
        let mixer = MixerConfig {
            image_h: size,
            image_w: size,
            patch: self.get("mixer.patch")?,
            dim: self.get("mixer.dim")?,
            layers: self.get("mixer.layers")?,
            branches: self.list("mixer.branches")?,
            reduce: self.list("mixer.reduce")?,
            token_hidden: None,
            channel_hidden: None,
        };
        let pseudo_inverse = match self.raw("unroll.pinv") {
            "fbp" => PseudoInverse::Fbp(self.filter()?),
            "adjoint" => PseudoInverse::Adjoint,
            other => return Err(cfg_err(format!("unknown pinv `{other}`"))),
        };
        let rule = match self.raw("unroll.rule") {
            "latent-bfgs" => UpdateRule::LatentBfgs,
            "gradient-step" => UpdateRule::GradientStep,
            other => return Err(cfg_err(format!("unknown rule `{other}`"))),
        };
        let net = UnrolledNet {
            mixer,
            codec: CodecConfig { stacks: self.get("codec.stacks")?, channels: self.get("codec.channels")? },
            unroll: UnrollConfig {
                iterations: self.get("unroll.iterations")?,
                pseudo_inverse,
                rule,
                curvature_eps: self.get("unroll.curvature_eps")?,
            },
        };
        net.validate()?;
        Ok(net)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.get("train.epochs")?,
            lr: self.get("train.lr")?,
            weight_decay: self.get("train.weight_decay")?,
            lr_decay_factor: self.get("train.lr_decay_factor")?,
            lr_decay_epoch: self.get("train.lr_decay_epoch")?,
            batch_size: self.get("train.batch_size")?,
            seed: self.seed()?,
            n_views: self.get("geometry.views")?,
            noise: self.noise()?,
            max_steps: Some(self.get::<usize>("train.max_steps")?).filter(|&m| m > 0),
            out_dir: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_render() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn defaults_build_desk_setup() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.geometry().unwrap(), Geometry::desk());
        assert_eq!(cfg.net().unwrap(), UnrolledNet { unroll: UnrollConfig::default(), ..UnrolledNet::desk() });
        assert_eq!(cfg.noise().unwrap(), NoiseConfig::n1());
    }

    #[test]
    fn comments_overrides_and_errors() {
        let mut cfg = RunConfig::parse("# c\nseed = 7 # trailing\n\ngeometry.beam=fan\n").unwrap();
        assert_eq!(cfg.seed().unwrap(), 7);
        assert_eq!(cfg.geometry().unwrap().angle_end, 2.0 * std::f64::consts::PI);
        cfg.apply_overrides(["seed=9"]).unwrap();
        assert_eq!(cfg.seed().unwrap(), 9);
        assert!(matches!(RunConfig::parse("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("seed"), Err(Error::Config(_))));
        assert!(RunConfig::parse("seed = x").unwrap().seed().is_err());
        assert!(RunConfig::parse("mixer.branches = 1,2").unwrap().net().is_err());
        assert!(RunConfig::parse("mixer.norm_eps = 1e-6").unwrap().net().is_err());
    }
}
