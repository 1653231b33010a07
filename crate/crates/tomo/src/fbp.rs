//! Filtered backprojection and its adjoint.
//!
//! The map is `B W F P`: cosine pre-weighting `P` (identity for parallel
//! beams), ramp filtering `F` of each view, and pixel-driven weighted
//! backprojection `W`/`B`. `F` is a real symmetric circulant on the padded
//! row, so the adjoint is `P F (B W)^T`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::geometry::{check_sinogram, Beam, Geometry, Image, Sinogram};
use crate::{cast, f64_of, Result, Scalar, TomoError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Filter {
    #[default]
    RamLak,
    Hann,
}

impl std::str::FromStr for Filter {
    type Err = TomoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ram-lak" | "ramlak" => Ok(Filter::RamLak),
            "hann" | "hann-windowed" => Ok(Filter::Hann),
            other => Err(TomoError::Argument(format!("unknown filter `{other}`"))),
        }
    }
}

struct RampFilter {
    n_pad: usize,
    response: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl RampFilter {
    /// Discrete ramp (band-limited spatial kernel) with sample spacing `tau`,
    /// zero-padded to a power of two >= 2 n.
    fn new(n: usize, tau: f64, filter: Filter) -> Self {
        let n_pad = (2 * n).next_power_of_two();
        let mut kernel = vec![Complex64::new(0.0, 0.0); n_pad];
        kernel[0].re = 1.0 / (4.0 * tau * tau);
        for k in (1..n_pad / 2 + 1).step_by(2) {
            let v = -1.0 / ((k * k) as f64 * PI * PI * tau * tau);
            kernel[k].re = v;
            kernel[n_pad - k].re = v;
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n_pad);
        let inv = planner.plan_fft_inverse(n_pad);
        fwd.process(&mut kernel);
        let response = kernel
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let f = k.min(n_pad - k) as f64 / n_pad as f64;
                let window = match filter {
                    Filter::RamLak => 1.0,
                    Filter::Hann => 0.5 * (1.0 + (2.0 * PI * f).cos()),
                };
                // kernel is real and even, so the response is real
                c.re * window * tau / n_pad as f64
            })
            .collect();
        Self { n_pad, response, fwd, inv }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_pad];
        for (b, &r) in buf.iter_mut().zip(row) {
            b.re = r;
        }
        self.fwd.process(&mut buf);
        for (b, &h) in buf.iter_mut().zip(&self.response) {
            *b *= h;
        }
        self.inv.process(&mut buf);
        buf[..row.len()].iter().map(|c| c.re).collect()
    }
}

impl Geometry {
    fn source_distances(&self) -> Option<(f64, f64)> {
        match self.beam {
            Beam::Parallel => None,
            Beam::Fan { sad_mm, add_mm } => Some((sad_mm, sad_mm + add_mm)),
        }
    }

    /// Detector spacing referred to the rotation axis.
    fn iso_spacing(&self) -> f64 {
        match self.source_distances() {
            None => self.det_spacing_mm,
            Some((sad, sdd)) => self.det_spacing_mm * sad / sdd,
        }
    }

    fn pre_weights(&self) -> Vec<f64> {
        (0..self.n_det)
            .map(|d| match self.source_distances() {
                None => 1.0,
                Some((sad, sdd)) => {
                    let u = self.det_coord(d) * sad / sdd;
                    sad / (sad * sad + u * u).sqrt()
                }
            })
            .collect()
    }

    /// Per-view quadrature weight; scans covering more than pi count each
    /// line `range / pi` times.
    fn angular_weight(&self) -> f64 {
        let range = self.angular_range();
        range / self.n_views() as f64 * (PI / range).min(1.0)
    }

    /// Calls `f(pixel, det_bin, weight)` for the pixel-driven backprojection
    /// taps of measured view `v`.
    fn pixel_taps(&self, v: usize, mut f: impl FnMut(usize, usize, f64)) {
        let (s, c) = self.view_angle(v).sin_cos();
        let (h, w, px) = (self.image_h, self.image_w, self.pixel_mm);
        let tau = self.iso_spacing();
        let center = (self.n_det as f64 - 1.0) / 2.0;
        for row in 0..h {
            let y = (row as f64 - (h as f64 - 1.0) / 2.0) * px;
            for col in 0..w {
                let x = (col as f64 - (w as f64 - 1.0) / 2.0) * px;
                let along_u = x * c + y * s;
                let (u, wt) = match self.source_distances() {
                    None => (along_u, 1.0),
                    Some((sad, _)) => {
                        let dist = sad + (-x * s + y * c);
                        (sad * along_u / dist, sad * sad / (dist * dist))
                    }
                };
                let pos = u / tau + center;
                let b0 = pos.floor();
                let frac = pos - b0;
                let b0 = b0 as isize;
                for (b, wb) in [(b0, 1.0 - frac), (b0 + 1, frac)] {
                    if b >= 0 && (b as usize) < self.n_det && wb > 0.0 {
                        f(row * w + col, b as usize, wt * wb);
                    }
                }
            }
        }
    }

    fn filter_rows(&self, y: &[f64], filter: Filter) -> Vec<f64> {
        let ramp = RampFilter::new(self.n_det, self.iso_spacing(), filter);
        let pre = self.pre_weights();
        let mut out = vec![0.0; y.len()];
        out.par_chunks_mut(self.n_det)
            .zip(y.par_chunks(self.n_det))
            .for_each(|(o, r)| {
                let weighted: Vec<f64> = r.iter().zip(&pre).map(|(a, b)| a * b).collect();
                o.copy_from_slice(&ramp.apply(&weighted));
            });
        out
    }

    /// Raw FBP of a view-major sinogram into a row-major image.
    pub fn fbp_slice<T: Scalar>(&self, y: &[T], filter: Filter) -> Vec<T> {
        assert_eq!(y.len(), self.sinogram_len(), "sinogram length");
        let yf: Vec<f64> = y.iter().map(|&v| f64_of(v)).collect();
        let q = self.filter_rows(&yf, filter);
        let scale = self.angular_weight();
        let mut img = vec![0.0; self.image_len()];
        for v in 0..self.n_views() {
            let row = &q[v * self.n_det..(v + 1) * self.n_det];
            self.pixel_taps(v, |p, b, wt| img[p] += wt * row[b]);
        }
        img.into_iter().map(|v| cast(v * scale)).collect()
    }

    /// Raw exact adjoint of [`Geometry::fbp_slice`].
    pub fn fbp_adjoint_slice<T: Scalar>(&self, x: &[T], filter: Filter) -> Vec<T> {
        assert_eq!(x.len(), self.image_len(), "image length");
        let scale = self.angular_weight();
        let mut q = vec![0.0; self.sinogram_len()];
        q.par_chunks_mut(self.n_det).enumerate().for_each(|(v, row)| {
            self.pixel_taps(v, |p, b, wt| row[b] += wt * f64_of(x[p]));
        });
        let ramp = RampFilter::new(self.n_det, self.iso_spacing(), filter);
        let pre = self.pre_weights();
        let mut out = Vec::with_capacity(q.len());
        for r in q.chunks(self.n_det) {
            let f = ramp.apply(r);
            out.extend(f.iter().zip(&pre).map(|(a, b)| cast::<T>(a * b * scale)));
        }
        out
    }
}

/// Filtered backprojection (the pseudo-inverse used for initialisation and
/// inside learned gradients).
pub fn fbp<T: Scalar>(y: &Sinogram<T>, g: &Geometry, filter: Filter) -> Result<Image<T>> {
    check_sinogram(y, g)?;
    if g.n_views() < 2 {
        return Err(TomoError::Argument(format!("FBP needs at least 2 views, got {}", g.n_views())));
    }
    let mut img = Image::new(g.image_h, g.image_w, g.fbp_slice(&y.data, filter))?;
    img.pixel_mm = g.pixel_mm;
    Ok(img)
}
