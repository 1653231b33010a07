//! Out-of-distribution disk insertion and cropped-region scoring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{arg, Result};
use crate::metrics::{psnr, ssim, SsimConfig};

/// Inserted disk: centre `(cx, cy)` in pixel indices and integer radius.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Circle {
    pub cx: usize,
    pub cy: usize,
    pub radius: usize,
}

/// Radius range `[5, 20)`, shrunk proportionally for images of 40 pixels or less.
pub fn radius_range(h: usize, w: usize) -> (usize, usize) {
    let side = h.min(w);
    if side > 40 {
        (5, 20)
    } else {
        let hi = (side / 2).max(2);
        let lo = (hi / 4).max(1);
        log::info!("image {h}x{w} too small for radii [5, 20); using [{lo}, {hi})");
        (lo, hi)
    }
}

/// Draws a circle: `radius ~ U{lo..hi-1}`, `cx ~ U{r..w-r-1}`, `cy ~ U{r..h-r-1}`.
pub fn sample_circle(h: usize, w: usize, seed: u64) -> Circle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = radius_range(h, w);
    let radius = rng.gen_range(lo..hi);
    let cx = rng.gen_range(radius..w - radius);
    let cy = rng.gen_range(radius..h - radius);
    Circle { cx, cy, radius }
}

/// Pixels with Euclidean distance to the centre `<= radius`.
pub fn circle_mask(h: usize, w: usize, c: Circle) -> Vec<bool> {
    let r2 = (c.radius * c.radius) as i64;
    (0..h * w)
        .map(|i| {
            let (dy, dx) = ((i / w) as i64 - c.cy as i64, (i % w) as i64 - c.cx as i64);
            dx * dx + dy * dy <= r2
        })
        .collect()
}

/// Sets the masked pixels of `x` to `value` (default 1).
pub fn paint(x: &mut [f64], mask: &[bool], value: f64) {
    x.iter_mut().zip(mask).filter(|(_, &m)| m).for_each(|(v, _)| *v = value);
}

/// Inserts a random disk; returns the painted image, its mask and the circle.
pub fn add_circle_ood(x: &[f64], h: usize, w: usize, seed: u64, value: f64) -> (Vec<f64>, Vec<bool>, Circle) {
    let c = sample_circle(h, w, seed);
    let mask = circle_mask(h, w, c);
    let mut out = x.to_vec();
    paint(&mut out, &mask, value);
    (out, mask, c)
}

/// Rows `r0..r1`, columns `c0..c1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundingBox {
    pub r0: usize,
    pub r1: usize,
    pub c0: usize,
    pub c1: usize,
}

impl BoundingBox {
    pub fn height(&self) -> usize {
        self.r1 - self.r0
    }

    pub fn width(&self) -> usize {
        self.c1 - self.c0
    }

    pub fn crop(&self, img: &[f64], w: usize) -> Vec<f64> {
        (self.r0..self.r1).flat_map(|r| img[r * w + self.c0..r * w + self.c1].iter().copied()).collect()
    }
}

/// Bounding box of the mask, dilated by `pad` and clipped to the image.
pub fn mask_bbox(mask: &[bool], h: usize, w: usize, pad: usize) -> Result<BoundingBox> {
    let mut bb: Option<BoundingBox> = None;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let (r, c) = (i / w, i % w);
        bb = Some(match bb {
            None => BoundingBox { r0: r, r1: r + 1, c0: c, c1: c + 1 },
            Some(b) => BoundingBox { r0: b.r0.min(r), r1: b.r1.max(r + 1), c0: b.c0.min(c), c1: b.c1.max(c + 1) },
        });
    }
    let b = bb.ok_or_else(|| arg("empty OOD mask"))?;
    Ok(BoundingBox { r0: b.r0.saturating_sub(pad), r1: (b.r1 + pad).min(h), c0: b.c0.saturating_sub(pad), c1: (b.c1 + pad).min(w) })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropMetrics {
    pub bbox: BoundingBox,
    pub psnr_db: f64,
    /// `None` when the crop is smaller than the SSIM window.
    pub ssim: Option<f64>,
}

/// PSNR/SSIM of `x` against `reference` on the padded mask bounding box.
pub fn eval_ood_crop(
    x: &[f64],
    reference: &[f64],
    h: usize,
    w: usize,
    mask: &[bool],
    pad: usize,
    cfg: &SsimConfig,
) -> Result<CropMetrics> {
    if x.len() != h * w || reference.len() != h * w || mask.len() != h * w {
        return Err(arg(format!("OOD crop inputs must all be {h}x{w}")));
    }
    let bbox = mask_bbox(mask, h, w, pad)?;
    let (a, b) = (bbox.crop(x, w), bbox.crop(reference, w));
    let psnr_db = psnr(&a, &b, cfg.data_range)?;
    let ssim = ssim(&a, &b, bbox.height(), bbox.width(), cfg).ok();
    Ok(CropMetrics { bbox, psnr_db, ssim })
}
