//! Noise power spectrum of zero-mean noise images.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{arg, Result};

/// Square ROIs given by their top-left corners.
#[derive(Clone, Debug, PartialEq)]
pub struct RoiLayout {
    pub size: usize,
    pub corners: Vec<(usize, usize)>,
}

impl RoiLayout {
    /// One ROI at the image centre plus `count` ROIs evenly spaced on each
    /// ring `(radius, count)`, all centred on the image centre.
    pub fn rings(h: usize, w: usize, size: usize, rings: &[(f64, usize)]) -> Self {
        let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
        let half = size as f64 / 2.0;
        let corner = |y: f64, x: f64| (((y - half).round().max(0.0)) as usize, ((x - half).round().max(0.0)) as usize);
        let mut corners = vec![corner(cy, cx)];
        for &(radius, count) in rings {
            for i in 0..count {
                let a = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                corners.push(corner(cy + radius * a.sin(), cx + radius * a.cos()));
            }
        }
        Self { size, corners }
    }

    /// 20-pixel ROIs: centre, 8 on radius 25, 20 on radius 50 (29 in
    /// total) for a 256-pixel image, with sizes and radii scaled by
    /// `min(h, w) / 256` (ROIs no smaller than 4 pixels).
    pub fn standard(h: usize, w: usize) -> Self {
        let f = h.min(w) as f64 / 256.0;
        let size = ((20.0 * f).round() as usize).max(4);
        Self::rings(h, w, size, &[(25.0 * f, 8), (50.0 * f, 20)])
    }

    /// Non-overlapping tiling of the whole image.
    pub fn grid(h: usize, w: usize, size: usize) -> Self {
        let corners = (0..h / size).flat_map(|r| (0..w / size).map(move |c| (r * size, c * size))).collect();
        Self { size, corners }
    }
}

#[derive(Clone, Debug)]
pub struct Nps {
    pub size: usize,
    /// Averaged 2-D periodogram, unshifted (DC at index 0), in value^2 px^2.
    pub map: Vec<f64>,
    /// Radial bin centres in cycles per pixel, `k / size` for `k = 0..=size/2`.
    pub freqs: Vec<f64>,
    pub curve: Vec<f64>,
    pub rois: usize,
}

impl Nps {
    /// `sum NPS df^2` over the full 2-D map; equals the noise variance.
    pub fn integral(&self) -> f64 {
        let df = 1.0 / self.size as f64;
        self.map.iter().sum::<f64>() * df * df
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "freq_cycles_per_px,nps_hu2px2")?;
        for (f, v) in self.freqs.iter().zip(&self.curve) {
            writeln!(out, "{f},{v:e}")?;
        }
        Ok(())
    }
}

/// Mean-subtracted ROI periodograms `|DFT|^2 / N^2` (unit pixel spacing),
/// averaged over every ROI of every image, then radially binned.
///
/// Values are multiplied by `scale` first (e.g. attenuation to HU).
pub fn nps_radial(images: &[&[f64]], h: usize, w: usize, layout: &RoiLayout, scale: f64) -> Result<Nps> {
    let n = layout.size;
    if n == 0 || layout.corners.is_empty() || images.is_empty() {
        return Err(arg("NPS needs at least one image and one non-empty ROI"));
    }
    for &(r, c) in &layout.corners {
        if r + n > h || c + n > w {
            return Err(arg(format!("ROI at ({r}, {c}) of size {n} leaves the {h}x{w} image")));
        }
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut map = vec![0.0; n * n];
    let mut count = 0;
    for img in images {
        if img.len() != h * w {
            return Err(arg(format!("noise image with {} values, expected {h}x{w}", img.len())));
        }
        for &(r0, c0) in &layout.corners {
            let mut roi: Vec<Complex64> = (0..n * n)
                .map(|i| Complex64::new(scale * img[(r0 + i / n) * w + c0 + i % n], 0.0))
                .collect();
            let mean = roi.iter().map(|v| v.re).sum::<f64>() / (n * n) as f64;
            roi.iter_mut().for_each(|v| v.re -= mean);
            for row in roi.chunks_mut(n) {
                fft.process(row);
            }
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            for c in 0..n {
                (0..n).for_each(|r| col[r] = roi[r * n + c]);
                fft.process(&mut col);
                (0..n).for_each(|r| roi[r * n + c] = col[r]);
            }
            for (m, v) in map.iter_mut().zip(&roi) {
                *m += v.norm_sqr() / (n * n) as f64;
            }
            count += 1;
        }
    }
    map.iter_mut().for_each(|m| *m /= count as f64);
    let bins = n / 2 + 1;
    let mut sum = vec![0.0; bins];
    let mut hits = vec![0usize; bins];
    let signed = |k: usize| if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    for ky in 0..n {
        for kx in 0..n {
            let b = (signed(ky).hypot(signed(kx))).round() as usize;
            if b < bins {
                sum[b] += map[ky * n + kx];
                hits[b] += 1;
            }
        }
    }
    let curve = sum.iter().zip(&hits).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
    let freqs = (0..bins).map(|k| k as f64 / n as f64).collect();
    Ok(Nps { size: n, map, freqs, curve, rois: count })
}
