//! `sparse-ct` command-line tool.
//!
//! Files are TOMO1 (f32 little-endian, see `tomo::io`). Each command writes
//! its resolved configuration next to its output (`<out>.cfg`, or `run.cfg`
//! inside output directories); passing it back with `--config` reproduces
//! the run.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndauto::checkpoint::{load_into, read_checkpoint, write_checkpoint};
use ndauto::Params;
use tomo::io::{load_image, load_sinogram, save_image, save_sinogram, write_pgm};
use tomo::{Geometry, Image, Sinogram};

use sparse_ct::config::RunConfig;
use sparse_ct::metrics::SsimConfig;
use sparse_ct::nps::{nps_radial, RoiLayout};
use sparse_ct::ood::{add_circle_ood, eval_ood_crop};
use sparse_ct::seeds::substream;
use sparse_ct::solvers::{gradient_descent, qn_reconstruct, write_trace_csv, LineSearch, Objective, Regularizer};
use sparse_ct::train::{phantom_set, train_unrolled, EvalReport, TrainConfig};
use sparse_ct::{Error, Problem, Result, UnrolledNet};

#[derive(Parser)]
#[command(name = "sparse-ct", version, about = "Sparse-view CT simulation, reconstruction and learned unrolled solvers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Settings shared by every command. Flags override `--config` values.
#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// Flat key = value config file (run `sparse-ct config` for the schema)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set unroll.iterations=1` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Master seed (integer); noise, init and ood use named substreams of it
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Image side (pixels)
    #[arg(long, global = true)]
    size: Option<usize>,
    /// Measured views (count), uniformly subsampled from the full scan
    #[arg(long, global = true)]
    views: Option<usize>,
    /// Views of the full scan (count)
    #[arg(long, global = true)]
    views_full: Option<usize>,
    /// Detector bins (count)
    #[arg(long, global = true)]
    detectors: Option<usize>,
    /// Beam shape: parallel | fan
    #[arg(long, global = true)]
    beam: Option<String>,
    /// FBP filter: ram-lak | hann
    #[arg(long, global = true)]
    filter: Option<String>,
    /// Incident photons per ray (count); 0 disables Poisson noise
    #[arg(long, global = true)]
    poisson: Option<f64>,
    /// Gaussian noise sigma as a fraction of mean |sinogram| (dimensionless)
    #[arg(long, global = true)]
    gauss_frac: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let flags: [(&str, Option<String>); 9] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("geometry.size", self.size.map(|v| v.to_string())),
            ("geometry.views", self.views.map(|v| v.to_string())),
            ("geometry.views_full", self.views_full.map(|v| v.to_string())),
            ("geometry.detectors", self.detectors.map(|v| v.to_string())),
            ("geometry.beam", self.beam.clone()),
            ("fbp.filter", self.filter.clone()),
            ("noise.poisson_n0", self.poisson.map(|v| v.to_string())),
            ("noise.gauss_frac", self.gauss_frac.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        cfg.apply_overrides(self.set.iter().map(String::as_str))?;
        Ok(cfg)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum PhantomKind {
    SheppLogan,
    RandomEllipses,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Fixed-step gradient descent on the variational objective
    Gd,
    /// Full-dimensional BFGS with line search (small images only)
    Qn,
    /// Learned unrolled network; needs --weights
    QnMixer,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the config schema with defaults
    Config {
        #[command(flatten)]
        common: Common,
    },
    /// Write a phantom image (attenuation in [0, 1])
    Phantom {
        #[arg(long, value_enum, default_value = "shepp-logan")]
        kind: PhantomKind,
        /// Output TOMO1 image
        #[arg(long)]
        out: PathBuf,
        /// Also write a 16-bit PGM preview here
        #[arg(long)]
        pgm: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Forward-project an image onto the measured views (line integrals in pixel-size units)
    Project {
        /// Input TOMO1 image
        #[arg(long)]
        input: PathBuf,
        /// Output TOMO1 sinogram (views x detectors)
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Filtered backprojection of a sinogram; its row count selects the views
    Fbp {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Add photon-count and Gaussian noise to a sinogram
    Noise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Iterative reconstruction of a sinogram
    Reconstruct {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Network checkpoint (qn-mixer)
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Per-iteration trace CSV
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Directory for intermediate images `iter_XXX.tomo`
        #[arg(long)]
        intermediates: Option<PathBuf>,
        /// Ground-truth image for the PSNR column of the qn-mixer trace
        #[arg(long)]
        reference: Option<PathBuf>,
        /// gd/qn iterations (count) [recon.iterations]
        #[arg(long)]
        iters: Option<usize>,
        /// Data-term weight lambda (dimensionless) [recon.lambda]
        #[arg(long)]
        lambda: Option<f64>,
        /// Smoothed-TV weight (data-term units); 0 disables it [recon.tv_mu]
        #[arg(long)]
        tv: Option<f64>,
        /// TV smoothing delta (attenuation units) [recon.tv_delta]
        #[arg(long)]
        tv_delta: Option<f64>,
        /// gd step as a multiple of 1/L [recon.step_scale]
        #[arg(long)]
        step_scale: Option<f64>,
        /// qn line search: fixed | armijo | strong-wolfe [recon.line_search]
        #[arg(long)]
        line_search: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the unrolled network on procedural phantoms
    Train {
        /// Output directory: epoch checkpoints, loss.csv, weights.ckpt, run.cfg
        #[arg(long)]
        out_dir: PathBuf,
        /// Only write the initial weights
        #[arg(long)]
        init_only: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Score every `*.tomo` image in --recon-dir against the same name in --ref-dir
    Eval {
        #[arg(long)]
        recon_dir: PathBuf,
        #[arg(long)]
        ref_dir: PathBuf,
        /// Metrics CSV: image_id,psnr_db,ssim,ms_ssim (PSNR in dB, SSIM as fractions)
        #[arg(long)]
        out: PathBuf,
        /// Peak value for PSNR/SSIM (attenuation units)
        #[arg(long, default_value_t = 1.0)]
        data_range: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Radial noise power spectrum of (reconstruction - reference) images
    Nps {
        /// Reconstructions of repeated noisy scans
        #[arg(long, required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Noise-free reference; without it the ensemble mean is subtracted
        #[arg(long)]
        reference: Option<PathBuf>,
        /// ROI side (pixels); default uses the two-ring layout
        #[arg(long)]
        roi: Option<usize>,
        /// Multiplier applied to pixel values before squaring (e.g. to HU)
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// CSV: freq_cycles_per_px,nps_hu2px2
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Inject a random circle, simulate a scan, reconstruct, and score full and cropped regions
    Ood {
        #[arg(long)]
        input: PathBuf,
        /// Output directory: truth.tomo, mask.pgm, recon.tomo, ood.csv, run.cfg
        #[arg(long)]
        out_dir: PathBuf,
        /// Network checkpoint; FBP is used without it
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn write_cfg_for(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut p = out.as_os_str().to_owned();
    p.push(".cfg");
    cfg.write(Path::new(&p))
}

/// Geometry of a sinogram with `n_v` rows under `cfg`.
fn measured_geometry(cfg: &mut RunConfig, n_v: usize, n_d: usize) -> Result<Geometry> {
    cfg.set("geometry.detectors", &n_d.to_string())?;
    let full = cfg.geometry()?;
    if n_v == full.n_views_full {
        cfg.set("geometry.views", &n_v.to_string())?;
        return Ok(full);
    }
    cfg.set("geometry.views", &n_v.to_string())?;
    let (_, g) = tomo::subsample_views(&Sinogram::<f64>::zeros(full.n_views(), n_d), &full, n_v)?;
    Ok(g)
}

fn measured_from_cfg(cfg: &RunConfig) -> Result<Geometry> {
    let full = cfg.geometry()?;
    let n_v: usize = cfg.get("geometry.views")?;
    let (_, g) = tomo::subsample_views(&Sinogram::<f64>::zeros(full.n_views(), full.n_det), &full, n_v)?;
    Ok(g)
}

fn load_weights(cfg: &RunConfig, net: &UnrolledNet, path: &Path) -> Result<Params<f64>> {
    let mut params = net.init_params::<f64>(0, cfg.init_mode()?)?;
    let loaded: Params<f64> = read_checkpoint(std::io::BufReader::new(fs::File::open(path)?))?;
    load_into(&mut params, &loaded)?;
    Ok(params)
}

fn save_checkpoint(params: &Params<f32>, path: &Path) -> Result<()> {
    write_checkpoint(params, BufWriter::new(fs::File::create(path)?))?;
    Ok(())
}

fn image_from(g: &Geometry, data: Vec<f64>) -> Result<Image<f64>> {
    let mut img = Image::new(g.image_h, g.image_w, data)?;
    img.pixel_mm = g.pixel_mm;
    Ok(img)
}

fn tomo_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "tomo"))
        .collect();
    v.sort();
    Ok(v)
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Config { common } => {
            print!("{}", common.resolve()?.render());
        }
        Cmd::Phantom { kind, out, pgm, common } => {
            let cfg = common.resolve()?;
            let n: usize = cfg.get("geometry.size")?;
            let img: Image<f64> = match kind {
                PhantomKind::SheppLogan => tomo::phantom::shepp_logan(n),
                PhantomKind::RandomEllipses => tomo::phantom::random_ellipses(n, substream(cfg.seed()?, "phantom", 0)),
            };
            save_image(&out, &img)?;
            if let Some(p) = pgm {
                write_pgm(BufWriter::new(fs::File::create(p)?), &img, true)?;
            }
            write_cfg_for(&cfg, &out)?;
        }
        Cmd::Project { input, out, common } => {
            let mut cfg = common.resolve()?;
            let img: Image<f64> = load_image(&input)?;
            if img.h != img.w {
                return Err(Error::Shape(format!("square images only, got {}x{}", img.h, img.w)));
            }
            cfg.set("geometry.size", &img.h.to_string())?;
            let g = measured_from_cfg(&cfg)?;
            save_sinogram(&out, &tomo::forward_project(&img, &g)?)?;
            write_cfg_for(&cfg, &out)?;
        }
        Cmd::Fbp { input, out, common } => {
            let mut cfg = common.resolve()?;
            let y: Sinogram<f64> = load_sinogram(&input)?;
            let g = measured_geometry(&mut cfg, y.n_v, y.n_d)?;
            save_image(&out, &tomo::fbp(&y, &g, cfg.filter()?)?)?;
            write_cfg_for(&cfg, &out)?;
        }
        Cmd::Noise { input, out, common } => {
            let cfg = common.resolve()?;
            let y: Sinogram<f64> = load_sinogram(&input)?;
            let noisy = tomo::simulate_measurement(&y, &cfg.noise()?, substream(cfg.seed()?, "noise", 0));
            save_sinogram(&out, &noisy)?;
            write_cfg_for(&cfg, &out)?;
        }
        Cmd::Reconstruct {
            method,
            input,
            out,
            weights,
            trace,
            intermediates,
            reference,
            iters,
            lambda,
            tv,
            tv_delta,
            step_scale,
            line_search,
            common,
        } => {
            let mut cfg = common.resolve()?;
            let flags = [
                ("recon.iterations", iters.map(|v| v.to_string())),
                ("recon.lambda", lambda.map(|v| v.to_string())),
                ("recon.tv_mu", tv.map(|v| v.to_string())),
                ("recon.tv_delta", tv_delta.map(|v| v.to_string())),
                ("recon.step_scale", step_scale.map(|v| v.to_string())),
                ("recon.line_search", line_search),
            ];
            for (k, v) in flags {
                if let Some(v) = v {
                    cfg.set(k, &v)?;
                }
            }
            let iters: usize = cfg.get("recon.iterations")?;
            let (lambda, tv, tv_delta): (f64, f64, f64) =
                (cfg.get("recon.lambda")?, cfg.get("recon.tv_mu")?, cfg.get("recon.tv_delta")?);
            let step_scale: f64 = cfg.get("recon.step_scale")?;
            let y: Sinogram<f64> = load_sinogram(&input)?;
            let g = measured_geometry(&mut cfg, y.n_v, y.n_d)?;
            let filter = cfg.filter()?;
            let reg = if tv > 0.0 { Regularizer::SmoothedTv { mu: tv, delta: tv_delta } } else { Regularizer::None };
            let mut stages: Vec<Vec<f64>> = Vec::new();
            let x = match method {
                Method::Gd => {
                    let obj = Objective::new(&g, &y.data, lambda, reg, g.image_h, g.image_w)?;
                    let x0 = tomo::fbp(&y, &g, filter)?.data;
                    let res = gradient_descent(&obj, &x0, step_scale / obj.lipschitz(), iters)?;
                    if let Some(t) = &trace {
                        let mut s = String::from("iteration,objective\n");
                        for (i, j) in res.trace.iter().enumerate() {
                            s.push_str(&format!("{i},{j:e}\n"));
                        }
                        fs::write(t, s)?;
                    }
                    res.x
                }
                Method::Qn => {
                    let obj = Objective::new(&g, &y.data, lambda, reg, g.image_h, g.image_w)?;
                    let x0 = tomo::fbp(&y, &g, filter)?.data;
                    let ls: LineSearch = cfg.raw("recon.line_search").parse()?;
                    let run = qn_reconstruct(&obj, &x0, iters, ls)?;
                    if let Some(t) = &trace {
                        write_trace_csv(BufWriter::new(fs::File::create(t)?), &run.trace)?;
                    }
                    run.x
                }
                Method::QnMixer => {
                    let w = weights.ok_or_else(|| Error::InvalidArgument("qn-mixer needs --weights".into()))?;
                    cfg.set("geometry.size", &g.image_h.to_string())?;
                    let net = cfg.net()?;
                    let params = load_weights(&cfg, &net, &w)?;
                    let pb = Problem::new(&y, &g, net.unroll.pseudo_inverse)?;
                    let rec = net.reconstruct(&params, &pb)?;
                    if let Some(t) = &trace {
                        let r: Option<Image<f64>> = reference.as_ref().map(load_image).transpose()?;
                        rec.write_trace(BufWriter::new(fs::File::create(t)?), r.as_ref().map(|i| i.data.as_slice()), 1.0)?;
                    }
                    stages = rec.intermediates;
                    rec.x
                }
            };
            if let Some(dir) = &intermediates {
                fs::create_dir_all(dir)?;
                for (i, s) in stages.into_iter().enumerate() {
                    save_image(dir.join(format!("iter_{:03}.tomo", i + 1)), &image_from(&g, s)?)?;
                }
            }
            save_image(&out, &image_from(&g, x)?)?;
            write_cfg_for(&cfg, &out)?;
        }
        Cmd::Train { out_dir, init_only, common } => {
            let cfg = common.resolve()?;
            fs::create_dir_all(&out_dir)?;
            cfg.write(&out_dir.join("run.cfg"))?;
            let net = cfg.net()?;
            let seed = cfg.seed()?;
            let params = net.init_params::<f32>(substream(seed, "init", 0), cfg.init_mode()?)?;
            if init_only {
                return save_checkpoint(&params, &out_dir.join("weights.ckpt"));
            }
            let truths = phantom_set(cfg.get("train.images")?, cfg.get("geometry.size")?, seed, "train");
            let tc = TrainConfig { out_dir: Some(out_dir.clone()), ..cfg.train()? };
            let outcome = train_unrolled(&net, params, &truths, &cfg.scanner()?, &tc, |r| {
                log::info!("step {} epoch {} loss {:.6e}", r.step, r.epoch, r.loss)
            })?;
            save_checkpoint(&outcome.params, &out_dir.join("weights.ckpt"))?;
        }
        Cmd::Eval { recon_dir, ref_dir, out, data_range, common } => {
            let cfg = common.resolve()?;
            let levels: usize = cfg.get("eval.ms_ssim_levels")?;
            let scfg = SsimConfig { data_range, ..SsimConfig::default() };
            let files = tomo_files(&recon_dir)?;
            let rows = std::thread::scope(|s| {
                let handles: Vec<_> = files
                    .iter()
                    .map(|f| {
                        let ref_dir = &ref_dir;
                        s.spawn(move || -> Result<Option<(String, Image<f64>, Image<f64>)>> {
                            let r = ref_dir.join(f.file_name().expect("file name"));
                            if !r.exists() {
                                log::warn!("no reference for {}", f.display());
                                return Ok(None);
                            }
                            let id = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                            Ok(Some((id, load_image(f)?, load_image(&r)?)))
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("eval worker")).collect::<Vec<_>>()
            });
            let mut report = EvalReport::default();
            for row in rows {
                if let Some((id, x, r)) = row? {
                    if (x.h, x.w) != (r.h, r.w) {
                        return Err(Error::Shape(format!("{id}: {}x{} vs reference {}x{}", x.h, x.w, r.h, r.w)));
                    }
                    report.rows.push(sparse_ct::train::EvalRow {
                        psnr_db: sparse_ct::metrics::psnr(&x.data, &r.data, data_range)?,
                        ssim: sparse_ct::metrics::ssim(&x.data, &r.data, x.h, x.w, &scfg)?,
                        ms_ssim: sparse_ct::metrics::ms_ssim(&x.data, &r.data, x.h, x.w, levels, &scfg).unwrap_or(f64::NAN),
                        image_id: id,
                    });
                }
            }
            report.write_csv(BufWriter::new(fs::File::create(&out)?))?;
            write_cfg_for(&cfg, &out)?;
        }
        Cmd::Nps { inputs, reference, roi, scale, out, common } => {
            let cfg = common.resolve()?;
            let imgs: Vec<Image<f64>> = inputs.iter().map(load_image).collect::<tomo::Result<_>>()?;
            let (h, w) = (imgs[0].h, imgs[0].w);
            if imgs.iter().any(|i| (i.h, i.w) != (h, w)) {
                return Err(Error::Shape("NPS inputs differ in size".into()));
            }
            let ensemble = reference.is_none();
            let base: Vec<f64> = match reference {
                Some(p) => load_image::<f64>(p)?.data,
                None if imgs.len() < 2 => {
                    return Err(Error::InvalidArgument("NPS needs a --reference or at least 2 inputs".into()))
                }
                None => (0..h * w).map(|i| imgs.iter().map(|m| m.data[i]).sum::<f64>() / imgs.len() as f64).collect(),
            };
            if base.len() != h * w {
                return Err(Error::Shape("reference size differs from the inputs".into()));
            }
            let mut noise: Vec<Vec<f64>> =
                imgs.iter().map(|m| m.data.iter().zip(&base).map(|(a, b)| a - b).collect()).collect();
            if ensemble {
                // ensemble-mean subtraction removes one degree of freedom
                let k = noise.len() as f64;
                let fix = (k / (k - 1.0)).sqrt();
                noise.iter_mut().for_each(|n| n.iter_mut().for_each(|v| *v *= fix));
            }
            let layout = match roi {
                Some(s) => RoiLayout::grid(h, w, s),
                None => RoiLayout::standard(h, w),
            };
            let refs: Vec<&[f64]> = noise.iter().map(Vec::as_slice).collect();
            let nps = nps_radial(&refs, h, w, &layout, scale)?;
            nps.write_csv(BufWriter::new(fs::File::create(&out)?))?;
            write_cfg_for(&cfg, &out)?;
        }
        Cmd::Ood { input, out_dir, weights, common } => {
            let mut cfg = common.resolve()?;
            let img: Image<f64> = load_image(&input)?;
            cfg.set("geometry.size", &img.h.to_string())?;
            fs::create_dir_all(&out_dir)?;
            cfg.write(&out_dir.join("run.cfg"))?;
            let seed = cfg.seed()?;
            let value: f64 = cfg.get("ood.value")?;
            let (data, mask, circle) = add_circle_ood(&img.data, img.h, img.w, substream(seed, "ood", 0), value);
            log::info!("circle at ({}, {}) radius {}", circle.cx, circle.cy, circle.radius);
            let truth = image_from(&cfg.geometry()?, data)?;
            save_image(out_dir.join("truth.tomo"), &truth)?;
            let mask_img = Image::new(img.h, img.w, mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect::<Vec<f64>>())?;
            write_pgm(BufWriter::new(fs::File::create(out_dir.join("mask.pgm"))?), &mask_img, false)?;
            let scanner = cfg.scanner()?;
            let (y, g) = scanner.measure(&truth, substream(seed, "noise", 0))?;
            let x = match &weights {
                Some(w) => {
                    let net = cfg.net()?;
                    let params = load_weights(&cfg, &net, w)?;
                    net.reconstruct(&params, &Problem::new(&y, &g, net.unroll.pseudo_inverse)?)?.x
                }
                None => tomo::fbp(&y, &g, cfg.filter()?)?.data,
            };
            save_image(out_dir.join("recon.tomo"), &image_from(&g, x.clone())?)?;
            let scfg = SsimConfig::default();
            let full_psnr = sparse_ct::metrics::psnr(&x, &truth.data, scfg.data_range)?;
            let full_ssim = sparse_ct::metrics::ssim(&x, &truth.data, img.h, img.w, &scfg)?;
            let crop = eval_ood_crop(&x, &truth.data, img.h, img.w, &mask, cfg.get("ood.crop_pad")?, &scfg)?;
            let b = crop.bbox;
            let csv = format!(
                "region,psnr_db,ssim,r0,r1,c0,c1\nfull,{full_psnr},{full_ssim},0,{},0,{}\ncrop,{},{},{},{},{},{}\n",
                img.h,
                img.w,
                crop.psnr_db,
                crop.ssim.unwrap_or(f64::NAN),
                b.r0,
                b.r1,
                b.c0,
                b.c1
            );
            fs::write(out_dir.join("ood.csv"), csv)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error kind=usage msg={first:?}");
            return ExitCode::from(2);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} msg={:?}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
