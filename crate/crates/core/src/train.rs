//! AdamW training of the unrolled network and evaluation helpers.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndauto::checkpoint::write_checkpoint;
use ndauto::{Graph, Params, Real};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tomo::{forward_project, simulate_measurement, subsample_views, Filter, Geometry, Image, NoiseConfig, Sinogram};

use crate::error::{arg, Error, Result};
use crate::metrics::{mean_std, ms_ssim, psnr, ssim, SsimConfig};
use crate::nn::Binder;
use crate::seeds::substream;
use crate::solvers::{gradient_descent, operator_norm_sq, Objective, Regularizer};
use crate::unroll::{Problem, UnrolledNet};

/// Decoupled-weight-decay Adam.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

/// Tensors exempt from weight decay: the per-iteration `lambda_t` and PReLU slopes.
pub fn decay_exempt(name: &str) -> bool {
    name.starts_with("unroll.lambda") || name.ends_with("act")
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update with learning rate `lr` from the accumulated gradients.
    /// Tensors without a gradient buffer are left untouched.
    pub fn step<T: Real>(&mut self, params: &mut Params<T>, lr: f64) {
        if self.m.is_empty() {
            self.m = params.ids().map(|id| vec![0.0; params.get(id).len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let decay = !decay_exempt(params.name(id));
            let t = params.get_mut(id);
            if !t.requires_grad() {
                continue;
            }
            let Some(grad) = t.grad().map(|g| g.iter().map(|v| v.as_f64()).collect::<Vec<_>>()) else { continue };
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            for (k, p) in t.data_mut().iter_mut().enumerate() {
                let mut val = p.as_f64();
                if decay {
                    val *= 1.0 - lr * self.weight_decay;
                }
                let g = grad[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                val -= lr * (m[k] / bc1) / ((v[k] / bc2).sqrt() + self.eps);
                *p = T::lit(val);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Multiplier applied to `lr` from epoch `lr_decay_epoch` on.
    pub lr_decay_factor: f64,
    pub lr_decay_epoch: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Measured (sparse) view count.
    pub n_views: usize,
    pub noise: NoiseConfig,
    /// Stops after this many optimizer steps, mid-epoch if needed.
    pub max_steps: Option<usize>,
    /// Directory for per-epoch checkpoints and the loss CSV.
    pub out_dir: Option<PathBuf>,
}

impl TrainConfig {
    /// lr 1e-4, weight decay 1e-2, x0.1 after epoch 40, 50 epochs, batch 1.
    pub fn full_size() -> Self {
        Self {
            epochs: 50,
            lr: 1e-4,
            weight_decay: 1e-2,
            lr_decay_factor: 0.1,
            lr_decay_epoch: 40,
            batch_size: 1,
            seed: 0,
            n_views: 32,
            noise: NoiseConfig::n1(),
            max_steps: None,
            out_dir: None,
        }
    }

    /// 100 epochs over 20 images (2000 steps) at lr 1e-3, 16 views.
    pub fn desk() -> Self {
        Self { epochs: 100, lr: 1e-3, lr_decay_epoch: 80, n_views: 16, ..Self::full_size() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(arg(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.lr_decay_factor) {
            return Err(arg(format!("lr decay factor must be in [0, 1], got {}", self.lr_decay_factor)));
        }
        if self.batch_size != 1 {
            return Err(arg("only batch size 1 is supported"));
        }
        if self.epochs == 0 {
            return Err(arg("epochs must be >= 1"));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch >= self.lr_decay_epoch {
            self.lr * self.lr_decay_factor
        } else {
            self.lr
        }
    }
}

/// Synthesises noisy sparse measurements of ground-truth images.
#[derive(Clone, Debug)]
pub struct Scanner {
    pub full: Geometry,
    pub n_views: usize,
    pub noise: NoiseConfig,
}

impl Scanner {
    /// Full-view projection, noise, then uniform view subsampling.
    pub fn measure(&self, truth: &Image<f64>, noise_seed: u64) -> Result<(Sinogram<f64>, Geometry)> {
        let y = forward_project(truth, &self.full)?;
        let y = simulate_measurement(&y, &self.noise, noise_seed);
        Ok(subsample_views(&y, &self.full, self.n_views)?)
    }

    /// Geometry of the measured views alone.
    pub fn measured_geometry(&self) -> Result<Geometry> {
        let empty = Sinogram::<f64>::zeros(self.full.n_views(), self.full.n_det);
        Ok(subsample_views(&empty, &self.full, self.n_views)?.1)
    }

    /// `|A|^2` of the measured geometry, by power iteration.
    pub fn a_norm_sq(&self) -> Result<f64> {
        Ok(operator_norm_sq(&self.measured_geometry()?, 50))
    }

    pub fn problem<T: Real>(&self, net: &UnrolledNet, truth: &Image<f64>, noise_seed: u64) -> Result<Problem<T>> {
        let (y, g) = self.measure(truth, noise_seed)?;
        Problem::new(&y.cast::<T>(), &g, net.unroll.pseudo_inverse)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRow {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

pub struct TrainOutcome<T> {
    pub params: Params<T>,
    pub losses: Vec<LossRow>,
    pub checkpoints: Vec<PathBuf>,
}

/// MSE of the network output against `truth`, with gradients accumulated
/// into `params`.
pub fn loss_and_grad<T: Real>(net: &UnrolledNet, params: &mut Params<T>, pb: &Problem<T>, truth: &[f64]) -> Result<f64> {
    let mut g = Graph::new();
    g.set_check_finite(false);
    let loss = {
        let mut b = Binder::new(params);
        let out = net.forward(&mut g, &mut b, pb)?;
        let (h, w) = net.image_dims();
        let target = ndauto::Tensor::new(&[1, 1, h, w], truth.iter().map(|&v| T::lit(v)).collect())?;
        g.mse(out.x, &target)?
    };
    let value = g.value(loss).data()[0].as_f64();
    if value.is_finite() {
        g.backward(loss, params)?;
    }
    Ok(value)
}

fn save(params: &Params<impl Real>, path: &Path) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    write_checkpoint(params, &mut f)?;
    f.flush()?;
    Ok(())
}

/// Trains `params` in place on `truths` with batch size 1.
///
/// Each epoch visits every image once in a seeded shuffled order; a fresh
/// noise realisation is drawn per visit. With `out_dir` set, writes
/// `epoch_XXXX.ckpt` after every epoch and `loss.csv` at the end. A
/// non-finite loss stops training and reports the last finished checkpoint.
/// A `max_steps` cap ends training mid-epoch; the partial epoch is still
/// checkpointed.
pub fn train_unrolled<T: Real>(
    net: &UnrolledNet,
    mut params: Params<T>,
    truths: &[Image<f64>],
    scanner: &Scanner,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&LossRow),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    net.validate()?;
    if truths.is_empty() {
        return Err(arg("training set is empty"));
    }
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
    }
    let mut opt = AdamW::new(cfg.weight_decay);
    let mut order: Vec<usize> = (0..truths.len()).collect();
    let mut losses = Vec::new();
    let mut checkpoints: Vec<PathBuf> = Vec::new();
    let mut step = 0;
    let budget = cfg.max_steps.unwrap_or(usize::MAX);
    for epoch in 0..cfg.epochs {
        if step >= budget {
            break;
        }
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(substream(cfg.seed, "shuffle", epoch as u64)));
        for &idx in order.iter().take(budget - step) {
            let pb = scanner.problem::<T>(net, &truths[idx], substream(cfg.seed, "noise", step as u64))?;
            params.zero_grad();
            let loss = loss_and_grad(net, &mut params, &pb, &truths[idx].data)?;
            let grads_ok = params.iter().all(|(_, t)| t.grad().map_or(true, |g| g.iter().all(|v| v.is_finite())));
            if !loss.is_finite() || !grads_ok {
                log::error!("non-finite loss at step {step}");
                return Err(Error::NonFiniteLoss { step, checkpoint: checkpoints.last().cloned() });
            }
            opt.step(&mut params, lr);
            let row = LossRow { step, epoch, lr, loss };
            on_step(&row);
            losses.push(row);
            step += 1;
        }
        if let Some(dir) = &cfg.out_dir {
            let path = dir.join(format!("epoch_{epoch:04}.ckpt"));
            save(&params, &path)?;
            checkpoints.push(path);
        }
    }
    if let Some(dir) = &cfg.out_dir {
        write_loss_csv(BufWriter::new(fs::File::create(dir.join("loss.csv"))?), &losses)?;
    }
    Ok(TrainOutcome { params, losses, checkpoints })
}

pub fn write_loss_csv<W: Write>(mut out: W, rows: &[LossRow]) -> std::io::Result<()> {
    writeln!(out, "step,epoch,lr,loss")?;
    for r in rows {
        writeln!(out, "{},{},{:e},{:e}", r.step, r.epoch, r.lr, r.loss)?;
    }
    out.flush()
}

/// Per-image quality scores.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub image_id: String,
    pub psnr_db: f64,
    pub ssim: f64,
    /// NaN when the image is too small for 5 scales.
    pub ms_ssim: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn push(&mut self, id: impl Into<String>, x: &[f64], reference: &[f64], h: usize, w: usize) -> Result<()> {
        let cfg = SsimConfig::default();
        self.rows.push(EvalRow {
            image_id: id.into(),
            psnr_db: psnr(x, reference, cfg.data_range)?,
            ssim: ssim(x, reference, h, w, &cfg)?,
            ms_ssim: ms_ssim(x, reference, h, w, 5, &cfg).unwrap_or(f64::NAN),
        });
        Ok(())
    }

    /// `(mean, std)` of PSNR.
    pub fn psnr(&self) -> (f64, f64) {
        mean_std(&self.rows.iter().map(|r| r.psnr_db).collect::<Vec<_>>())
    }

    pub fn ssim(&self) -> (f64, f64) {
        mean_std(&self.rows.iter().map(|r| r.ssim).collect::<Vec<_>>())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "image_id,psnr_db,ssim,ms_ssim")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.image_id, r.psnr_db, r.ssim, r.ms_ssim)?;
        }
        out.flush()
    }
}

/// Scores `recon(y, geometry)` on `truths`; the noise realisation of image
/// `i` depends only on `seed` and `i`, so methods see identical data.
pub fn evaluate_with(
    truths: &[Image<f64>],
    scanner: &Scanner,
    seed: u64,
    mut recon: impl FnMut(&Sinogram<f64>, &Geometry) -> Result<Vec<f64>>,
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for (i, truth) in truths.iter().enumerate() {
        let (y, g) = scanner.measure(truth, substream(seed, "eval-noise", i as u64))?;
        let x = recon(&y, &g)?;
        report.push(format!("{i}"), &x, &truth.data, truth.h, truth.w)?;
    }
    Ok(report)
}

/// Scores the network on `truths` (see [`evaluate_with`]).
pub fn evaluate_net<T: Real>(
    net: &UnrolledNet,
    params: &Params<T>,
    truths: &[Image<f64>],
    scanner: &Scanner,
    seed: u64,
) -> Result<EvalReport> {
    evaluate_with(truths, scanner, seed, |y, g| {
        let pb = Problem::new(&y.cast::<T>(), g, net.unroll.pseudo_inverse)?;
        Ok(net.reconstruct(params, &pb)?.x.iter().map(|v| v.as_f64()).collect())
    })
}

/// Classical gradient descent on `1/2 |Ax - y|^2 + mu TV_delta(x)` from the
/// FBP image, with a fixed step `step_scale / L`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GdBaseline {
    pub iterations: usize,
    pub mu: f64,
    pub delta: f64,
    pub step_scale: f64,
    pub filter: Filter,
}

impl GdBaseline {
    /// `a_norm_sq` is `|A|^2` for the measured geometry.
    pub fn reconstruct(&self, y: &Sinogram<f64>, g: &Geometry, a_norm_sq: f64) -> Result<Vec<f64>> {
        let x0 = tomo::fbp(y, g, self.filter)?.data;
        let reg = if self.mu > 0.0 { Regularizer::SmoothedTv { mu: self.mu, delta: self.delta } } else { Regularizer::None };
        let obj = Objective::new(g, &y.data, 1.0, reg, g.image_h, g.image_w)?;
        let lip = a_norm_sq + if self.mu > 0.0 { 8.0 * self.mu / self.delta } else { 0.0 };
        Ok(gradient_descent(&obj, &x0, self.step_scale / lip, self.iterations)?.x)
    }
}

/// Grid-searches [`GdBaseline`] on `truths` (mean PSNR) with `iterations`
/// steps; `mu` is searched relative to `|A|^2`. Returns the best setting and
/// its training PSNR.
pub fn fit_gd_baseline(
    truths: &[Image<f64>],
    scanner: &Scanner,
    iterations: usize,
    filter: Filter,
    seed: u64,
) -> Result<(GdBaseline, f64)> {
    let a2 = scanner.a_norm_sq()?;
    let mut best: Option<(GdBaseline, f64)> = None;
    for rho in [0.0, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1] {
        for delta in [0.01, 0.05] {
            for step_scale in [1.0, 1.9] {
                let cand = GdBaseline { iterations, mu: rho * a2, delta, step_scale, filter };
                let rep = evaluate_with(truths, scanner, seed, |y, g| cand.reconstruct(y, g, a2))?;
                let score = rep.psnr().0;
                if best.map_or(true, |(_, s)| score > s) {
                    best = Some((cand, score));
                }
                if rho == 0.0 {
                    break;
                }
            }
            if rho == 0.0 {
                break;
            }
        }
    }
    Ok(best.expect("non-empty grid"))
}

/// Procedural training/test images: random-ellipse phantoms from a named
/// substream of `seed`.
pub fn phantom_set(n: usize, size: usize, seed: u64, split: &str) -> Vec<Image<f64>> {
    (0..n as u64).map(|i| tomo::phantom::random_ellipses(size, substream(seed, split, i))).collect()
}
