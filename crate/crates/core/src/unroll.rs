//! Unrolled reconstruction with a latent BFGS inverse-Hessian update.
//!
//! ```text
//! H_0 = I, x_0 = A^+ y, r_0 = E(grad J_0(x_0))
//! for t in 0..T:
//!     s_t = -H_t r_t
//!     x_{t+1} = x_t + D(s_t)
//!     if t < T - 1:
//!         r_{t+1} = E(grad J_{t+1}(x_{t+1})); z_t = r_{t+1} - r_t
//!         H_{t+1} = BFGS(H_t, s_t, z_t)        (outside the autodiff graph)
//! grad J_t(x) = lambda_t A^+ (A x - y) + G(x)
//! ```
//!
//! `G` is one mixer shared by all iterations, `E` and `D` are shared too, and
//! each iteration owns one scalar `lambda_t`.

use std::io::Write;
use std::sync::Arc;

use ndauto::{Graph, Params, Real, Tensor, Var};
use tomo::{Filter, Geometry, Sinogram};

use crate::codec::{decode, encode, init_codec, CodecConfig, DECODER_HEAD};
use crate::error::{arg, Error, Result};
use crate::mixer::{init_mixer, mixer_forward, MixerConfig, HEAD};
use crate::nn::{zero, Binder};
use crate::solvers::{BfgsState, CurvaturePolicy, HessianDiagnostics, UpdateOutcome};

/// Operator standing in for `A^+` inside the learned gradient and for `x_0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PseudoInverse {
    Fbp(Filter),
    Adjoint,
}

/// How an unrolled iteration turns the learned gradient into an update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateRule {
    /// `x + D(-H E(grad J))` with the latent BFGS update of `H`.
    LatentBfgs,
    /// `x - grad J`: the first-order unrolled scheme (no codec, no `H`).
    GradientStep,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnrollConfig {
    pub iterations: usize,
    pub pseudo_inverse: PseudoInverse,
    pub rule: UpdateRule,
    /// Latent pairs with `|z's|` below this are skipped.
    pub curvature_eps: f64,
}

impl Default for UnrollConfig {
    fn default() -> Self {
        Self {
            iterations: 6,
            pseudo_inverse: PseudoInverse::Fbp(Filter::RamLak),
            rule: UpdateRule::LatentBfgs,
            curvature_eps: 1e-12,
        }
    }
}

/// Parameter initialisation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InitMode {
    /// Xavier-uniform convolutions, truncated-normal MLPs, zero biases and
    /// `lambda_t = 0`.
    #[default]
    Standard,
    /// As `Standard` with the decoder's final conv zeroed, so the network
    /// starts at `x_0` but every block still receives gradient.
    ZeroDecoderHead,
    /// As `Standard` with the final convs of the mixer and the decoder
    /// zeroed: the network is exactly the identity on `x_0`.
    ColdStart,
}

/// Learned quasi-Newton reconstruction network.
#[derive(Clone, Debug, PartialEq)]
pub struct UnrolledNet {
    pub mixer: MixerConfig,
    pub codec: CodecConfig,
    pub unroll: UnrollConfig,
}

pub fn lambda_name(t: usize) -> String {
    format!("unroll.lambda.{t}")
}

/// One measured sinogram prepared for the network.
#[derive(Clone, Debug)]
pub struct Problem<T> {
    pub geometry: Arc<Geometry>,
    pub y: Vec<T>,
    /// `x_0 = A^+ y`.
    pub x0: Vec<T>,
}

impl<T: Real> Problem<T> {
    pub fn new(y: &Sinogram<T>, geometry: &Geometry, pinv: PseudoInverse) -> Result<Self> {
        if y.n_v != geometry.n_views() || y.n_d != geometry.n_det {
            return Err(Error::Shape(format!(
                "sinogram {}x{} vs geometry {}x{}",
                y.n_v,
                y.n_d,
                geometry.n_views(),
                geometry.n_det
            )));
        }
        let x0 = match pinv {
            PseudoInverse::Fbp(f) => tomo::fbp(y, geometry, f)?.data,
            PseudoInverse::Adjoint => tomo::back_project(y, geometry)?.data,
        };
        Ok(Self { geometry: Arc::new(geometry.clone()), y: y.data.clone(), x0 })
    }
}

/// Per-iteration record of an unrolled run.
#[derive(Clone, Debug, PartialEq)]
pub struct IterRecord {
    pub t: usize,
    /// `None` on the last iteration (no update) and for gradient steps.
    pub update: Option<UpdateOutcome>,
    pub diagnostics: HessianDiagnostics,
    /// `|s_t|`, the latent step norm (gradient norm for gradient steps).
    pub step_norm: f64,
}

/// Output of [`UnrolledNet::forward`].
pub struct Unrolled {
    pub x: Var,
    /// `x_1 .. x_T` values.
    pub iterates: Vec<Var>,
    pub records: Vec<IterRecord>,
    pub state: Option<BfgsState>,
}

impl UnrolledNet {
    /// 64x64 images, `T = 6`, `k = 2` (16x16 latent), `d = 24` mixer.
    pub fn desk() -> Self {
        Self { mixer: MixerConfig::desk(), codec: CodecConfig::new(2), unroll: UnrollConfig::default() }
    }

    /// 256x256 images, `T = 14`, `k = 2` (64x64 latent), `d = 96` mixer.
    pub fn full_size() -> Self {
        Self {
            mixer: MixerConfig::full_size(),
            codec: CodecConfig::new(2),
            unroll: UnrollConfig { iterations: 14, ..UnrollConfig::default() },
        }
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.mixer.image_h, self.mixer.image_w)
    }

    pub fn validate(&self) -> Result<()> {
        self.mixer.validate()?;
        if self.unroll.iterations == 0 {
            return Err(arg("unrolled network needs T >= 1"));
        }
        if self.unroll.rule == UpdateRule::LatentBfgs {
            self.codec.latent_dims(self.mixer.image_h, self.mixer.image_w)?;
        }
        Ok(())
    }

    /// Latent grid `(l_h, l_w)`.
    pub fn latent_dims(&self) -> Result<(usize, usize)> {
        self.codec.latent_dims(self.mixer.image_h, self.mixer.image_w)
    }

    pub fn init_params<T: Real>(&self, seed: u64, mode: InitMode) -> Result<Params<T>> {
        self.validate()?;
        let mut p = Params::new();
        init_mixer(&self.mixer, &mut p, seed)?;
        if self.unroll.rule == UpdateRule::LatentBfgs {
            init_codec(&self.codec, &mut p, seed.wrapping_add(1))?;
        }
        for t in 0..self.unroll.iterations {
            p.insert(lambda_name(t), Tensor::zeros(&[1]))?;
        }
        if mode != InitMode::Standard {
            zero(&mut p, &format!("{DECODER_HEAD}.weight"));
        }
        if mode == InitMode::ColdStart {
            zero(&mut p, &format!("{HEAD}.weight"));
        }
        Ok(p)
    }

    /// `A^+ (A x - y)` with exact adjoints recorded for the reverse sweep.
    fn data_term<T: Real>(&self, g: &mut Graph<T>, x: Var, y: Var, pb: &Problem<T>) -> Result<Var> {
        let geo = pb.geometry.clone();
        let (geo_f, geo_b) = (geo.clone(), geo.clone());
        let ax = g.linear_map(x, &[geo.sinogram_len()], |v| geo_f.project_slice(v), move |u| geo_b.backproject_slice(u))?;
        let r = g.sub(ax, y)?;
        let shape = [1, 1, geo.image_h, geo.image_w];
        let (geo_f, geo_b) = (geo.clone(), geo);
        let back = match self.unroll.pseudo_inverse {
            PseudoInverse::Fbp(f) => g.linear_map(r, &shape, |v| geo_f.fbp_slice(v, f), move |u| geo_b.fbp_adjoint_slice(u, f))?,
            PseudoInverse::Adjoint => {
                g.linear_map(r, &shape, |v| geo_f.backproject_slice(v), move |u| geo_b.project_slice(u))?
            }
        };
        Ok(back)
    }

    /// `grad J_t(x) = lambda_t A^+ (A x - y) + G(x)`.
    pub fn learned_gradient<T: Real>(
        &self,
        g: &mut Graph<T>,
        b: &mut Binder<'_, T>,
        x: Var,
        y: Var,
        t: usize,
        pb: &Problem<T>,
    ) -> Result<Var> {
        let lambda = b.get(g, &lambda_name(t))?;
        let data = self.data_term(g, x, y, pb)?;
        let data = g.scale_by(data, lambda)?;
        let reg = mixer_forward(g, b, x, &self.mixer)?;
        Ok(g.add(data, reg)?)
    }

    /// Records the full unrolled network on `g`.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, b: &mut Binder<'_, T>, pb: &Problem<T>) -> Result<Unrolled> {
        self.validate()?;
        let (h, w) = self.image_dims();
        if pb.geometry.image_h != h || pb.geometry.image_w != w {
            return Err(Error::Shape(format!(
                "network expects {h}x{w} images, geometry has {}x{}",
                pb.geometry.image_h, pb.geometry.image_w
            )));
        }
        let y = g.constant(Tensor::new(&[pb.y.len()], pb.y.clone())?);
        let mut x = g.constant(Tensor::new(&[1, 1, h, w], pb.x0.clone())?);
        let iters = self.unroll.iterations;
        let mut iterates = Vec::with_capacity(iters);
        let mut records = Vec::with_capacity(iters);
        match self.unroll.rule {
            UpdateRule::GradientStep => {
                for t in 0..iters {
                    let grad = self.learned_gradient(g, b, x, y, t, pb)?;
                    let step_norm = l2(g.value(grad).data());
                    x = g.sub(x, grad)?;
                    iterates.push(x);
                    records.push(IterRecord { t, update: None, diagnostics: HessianDiagnostics::default(), step_norm });
                }
                Ok(Unrolled { x, iterates, records, state: None })
            }
            UpdateRule::LatentBfgs => {
                let (lh, lw) = self.latent_dims()?;
                let dim = lh * lw;
                let mut state = BfgsState::identity(dim, CurvaturePolicy::Magnitude { eps: self.unroll.curvature_eps });
                let grad = self.learned_gradient(g, b, x, y, 0, pb)?;
                let mut r = encode(g, b, grad, &self.codec)?;
                r = g.reshape(r, &[dim, 1])?;
                for t in 0..iters {
                    let hm = g.constant(Tensor::new(&[dim, dim], state.h().iter().map(|&v| T::lit(v)).collect())?);
                    let hr = g.matmul(hm, r)?;
                    let s = g.scale(hr, -T::one())?;
                    let s_img = g.reshape(s, &[1, 1, lh, lw])?;
                    let step = decode(g, b, s_img, &self.codec)?;
                    x = g.add(x, step)?;
                    iterates.push(x);
                    let s_val = values_f64(g, s);
                    let step_norm = l2_f64(&s_val);
                    if t + 1 == iters {
                        records.push(IterRecord { t, update: None, diagnostics: state.diagnostics(), step_norm });
                        break;
                    }
                    let grad = self.learned_gradient(g, b, x, y, t + 1, pb)?;
                    let r_next = encode(g, b, grad, &self.codec)?;
                    let r_next = g.reshape(r_next, &[dim, 1])?;
                    let z: Vec<f64> = values_f64(g, r_next).iter().zip(values_f64(g, r)).map(|(a, b)| a - b).collect();
                    let outcome = state.update(&s_val, &z);
                    records.push(IterRecord { t, update: Some(outcome), diagnostics: state.diagnostics(), step_norm });
                    r = r_next;
                }
                Ok(Unrolled { x, iterates, records, state: Some(state) })
            }
        }
    }

    /// Value-only reconstruction.
    pub fn reconstruct<T: Real>(&self, params: &Params<T>, pb: &Problem<T>) -> Result<Reconstruction<T>> {
        let mut g = Graph::new();
        g.set_check_finite(false);
        let mut b = Binder::new(params);
        let out = self.forward(&mut g, &mut b, pb)?;
        let x = g.value(out.x).data().to_vec();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Tensor(ndauto::TensorError::NonFinite { op: "unrolled reconstruction" }));
        }
        Ok(Reconstruction {
            intermediates: out.iterates.iter().map(|&v| g.value(v).data().to_vec()).collect(),
            x,
            records: out.records,
            state: out.state,
        })
    }
}

pub struct Reconstruction<T> {
    pub x: Vec<T>,
    /// `x_1 .. x_T` (the last equals `x`).
    pub intermediates: Vec<Vec<T>>,
    pub records: Vec<IterRecord>,
    pub state: Option<BfgsState>,
}

impl<T: Real> Reconstruction<T> {
    /// Trace CSV: `t,psnr_db,symmetry_index,secant_residual,frobenius_step,update,step_norm`.
    /// `psnr_db` is empty without a reference.
    pub fn write_trace<W: Write>(&self, mut out: W, reference: Option<&[T]>, data_range: f64) -> std::io::Result<()> {
        writeln!(out, "t,psnr_db,symmetry_index,secant_residual,frobenius_step,update,step_norm")?;
        for (rec, xt) in self.records.iter().zip(&self.intermediates) {
            let psnr = reference
                .map(|r| {
                    let a: Vec<f64> = xt.iter().map(|v| v.as_f64()).collect();
                    let b: Vec<f64> = r.iter().map(|v| v.as_f64()).collect();
                    crate::metrics::psnr(&a, &b, data_range).map(|p| format!("{p:.6}")).unwrap_or_default()
                })
                .unwrap_or_default();
            let update = match rec.update {
                None => "none".to_string(),
                Some(UpdateOutcome::Applied { .. }) => "applied".to_string(),
                Some(UpdateOutcome::Skipped { .. }) => "skipped".to_string(),
            };
            let d = rec.diagnostics;
            writeln!(
                out,
                "{},{psnr},{:e},{:e},{:e},{update},{:e}",
                rec.t + 1,
                d.symmetry_index,
                d.secant_residual,
                d.frobenius_step,
                rec.step_norm
            )?;
        }
        Ok(())
    }
}

fn values_f64<T: Real>(g: &Graph<T>, v: Var) -> Vec<f64> {
    g.value(v).data().iter().map(|x| x.as_f64()).collect()
}

fn l2<T: Real>(v: &[T]) -> f64 {
    v.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt()
}

fn l2_f64(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
