//! PSNR, SSIM and MS-SSIM on row-major images.

use crate::error::{arg, Error, Result};

/// Standard MS-SSIM scale exponents (coarsest last).
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

fn same_len(x: &[f64], r: &[f64]) -> Result<()> {
    if x.len() != r.len() || x.is_empty() {
        return Err(Error::Shape(format!("images of {} and {} values", x.len(), r.len())));
    }
    Ok(())
}

/// `10 log10(range^2 / MSE)`; identical images give `+inf`.
pub fn psnr(x: &[f64], reference: &[f64], data_range: f64) -> Result<f64> {
    same_len(x, reference)?;
    let mse = x.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / mse).log10())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConfig {
    pub kernel: usize,
    pub sigma: f64,
    pub data_range: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self { kernel: 11, sigma: 1.5, data_range: 1.0, k1: 0.01, k2: 0.03 }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }

    /// Normalised 1-D Gaussian taps.
    pub fn window(&self) -> Vec<f64> {
        let c = (self.kernel as f64 - 1.0) / 2.0;
        let w: Vec<f64> = (0..self.kernel)
            .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }
}

/// Valid separable filtering of an `h x w` image.
fn filter(img: &[f64], h: usize, w: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            tmp[r * ow + c] = (0..n).map(|i| k[i] * img[r * w + c + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..n).map(|i| k[i] * tmp[(r + i) * ow + c]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean SSIM and mean contrast-structure term over all valid windows.
fn ssim_cs(x: &[f64], y: &[f64], h: usize, w: usize, cfg: &SsimConfig) -> Result<(f64, f64)> {
    if h < cfg.kernel || w < cfg.kernel {
        return Err(arg(format!("image {h}x{w} is smaller than the {0}x{0} SSIM window", cfg.kernel)));
    }
    let k = cfg.window();
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let (mx, ..) = filter(x, h, w, &k);
    let (my, ..) = filter(y, h, w, &k);
    let (mxx, ..) = filter(&prod(x, x), h, w, &k);
    let (myy, ..) = filter(&prod(y, y), h, w, &k);
    let (mxy, ..) = filter(&prod(x, y), h, w, &k);
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let (mut s_acc, mut cs_acc) = (0.0, 0.0);
    for i in 0..mx.len() {
        let (a, b) = (mx[i], my[i]);
        let vx = mxx[i] - a * a;
        let vy = myy[i] - b * b;
        let cov = mxy[i] - a * b;
        let cs = (2.0 * cov + c2) / (vx + vy + c2);
        s_acc += (2.0 * a * b + c1) / (a * a + b * b + c1) * cs;
        cs_acc += cs;
    }
    let n = mx.len() as f64;
    Ok((s_acc / n, cs_acc / n))
}

/// Single-scale SSIM with a Gaussian window (valid windows only).
pub fn ssim(x: &[f64], reference: &[f64], h: usize, w: usize, cfg: &SsimConfig) -> Result<f64> {
    same_len(x, reference)?;
    if x.len() != h * w {
        return Err(Error::Shape(format!("{} values for a {h}x{w} image", x.len())));
    }
    Ok(ssim_cs(x, reference, h, w, cfg)?.0)
}

fn mean_pool2(img: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow);
    for r in 0..oh {
        for c in 0..ow {
            let p = 2 * r * w + 2 * c;
            out.push(0.25 * (img[p] + img[p + 1] + img[p + w] + img[p + w + 1]));
        }
    }
    (out, oh, ow)
}

/// Multi-scale SSIM over `levels` dyadic scales (2x2 mean pooling between
/// scales), with the standard exponents renormalised when `levels < 5`.
///
/// Negative per-scale terms are clamped to zero before exponentiation.
pub fn ms_ssim(x: &[f64], reference: &[f64], h: usize, w: usize, levels: usize, cfg: &SsimConfig) -> Result<f64> {
    same_len(x, reference)?;
    if x.len() != h * w {
        return Err(Error::Shape(format!("{} values for a {h}x{w} image", x.len())));
    }
    if levels == 0 || levels > MS_SSIM_WEIGHTS.len() {
        return Err(arg(format!("MS-SSIM levels must be in 1..=5, got {levels}")));
    }
    let min_side = cfg.kernel << (levels - 1);
    if h < min_side || w < min_side {
        return Err(arg(format!("{levels}-scale MS-SSIM needs at least {min_side}x{min_side} pixels, got {h}x{w}")));
    }
    let weights = &MS_SSIM_WEIGHTS[..levels];
    let total: f64 = weights.iter().sum();
    let (mut a, mut b, mut hh, mut ww) = (x.to_vec(), reference.to_vec(), h, w);
    let mut out = 1.0;
    for (j, wj) in weights.iter().enumerate() {
        let (s, cs) = ssim_cs(&a, &b, hh, ww, cfg)?;
        let term = if j + 1 == levels { s } else { cs };
        out *= term.max(0.0).powf(wj / total);
        if j + 1 < levels {
            let (pa, nh, nw) = mean_pool2(&a, hh, ww);
            let (pb, ..) = mean_pool2(&b, hh, ww);
            a = pa;
            b = pb;
            hh = nh;
            ww = nw;
        }
    }
    Ok(out)
}

/// Mean and (population) standard deviation, skipping non-finite values.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let f: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if f.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = f.iter().sum::<f64>() / f.len() as f64;
    let var = f.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / f.len() as f64;
    (m, var.sqrt())
}
