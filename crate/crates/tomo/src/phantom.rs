//! Procedural phantoms on a `[-1, 1]^2` normalised field of view.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Image;
use crate::{cast, Scalar};

/// Additive ellipse: centre, semi-axes, rotation (radians) and intensity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub intensity: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    pub phi: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.phi.sin_cos();
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = (dx * c + dy * s) / self.a;
        let v = (-dx * s + dy * c) / self.b;
        u * u + v * v <= 1.0
    }
}

/// Modified (high-contrast) Shepp-Logan ellipses.
pub fn shepp_logan_ellipses() -> Vec<Ellipse> {
    let d = |deg: f64| deg.to_radians();
    [
        (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
        (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
        (-0.2, 0.11, 0.31, 0.22, 0.0, d(-18.0)),
        (-0.2, 0.16, 0.41, -0.22, 0.0, d(18.0)),
        (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
        (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
        (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
        (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
        (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
        (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
    ]
    .into_iter()
    .map(|(intensity, a, b, x0, y0, phi)| Ellipse { intensity, a, b, x0, y0, phi })
    .collect()
}

/// Rasterises summed ellipses with `ss x ss` supersampling per pixel,
/// clamping the result to `[0, 1]`.
///
/// Row 0 is the top of the field (`y = +1`).
pub fn rasterize<T: Scalar>(ellipses: &[Ellipse], h: usize, w: usize, ss: usize) -> Image<T> {
    let ss = ss.max(1);
    let mut data = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for si in 0..ss {
                for sj in 0..ss {
                    let y = 1.0 - 2.0 * (r as f64 + (si as f64 + 0.5) / ss as f64) / h as f64;
                    let x = 2.0 * (c as f64 + (sj as f64 + 0.5) / ss as f64) / w as f64 - 1.0;
                    acc += ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum::<f64>();
                }
            }
            data.push(cast((acc / (ss * ss) as f64).clamp(0.0, 1.0)));
        }
    }
    Image { h, w, pixel_mm: 1.0, data }
}

/// Modified Shepp-Logan phantom, values in `[0, 1]`, each pixel the 4x4
/// supersampled average of the continuous phantom.
pub fn shepp_logan<T: Scalar>(n: usize) -> Image<T> {
    rasterize(&shepp_logan_ellipses(), n, n, 4)
}

/// Body-like random phantom: a soft-tissue ellipse with a brighter rim and a
/// handful of random inclusions. Deterministic for a fixed seed.
pub fn random_ellipses<T: Scalar>(n: usize, seed: u64) -> Image<T> {
    rasterize(&random_ellipse_set(seed), n, n, 2)
}

pub fn random_ellipse_set(seed: u64) -> Vec<Ellipse> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = rng.gen_range(0.62..0.85);
    let b = rng.gen_range(0.62..0.85);
    let phi = rng.gen_range(-0.4..0.4);
    let rim = rng.gen_range(0.04..0.08);
    let tissue = rng.gen_range(0.25..0.45);
    let mut set = vec![
        Ellipse { intensity: 0.9, a, b, x0: 0.0, y0: 0.0, phi },
        Ellipse { intensity: tissue - 0.9, a: a - rim, b: b - rim, x0: 0.0, y0: 0.0, phi },
    ];
    let count = rng.gen_range(4..10);
    for _ in 0..count {
        let r = rng.gen_range(0.0..0.55);
        let t = rng.gen_range(0.0..std::f64::consts::TAU);
        set.push(Ellipse {
            intensity: rng.gen_range(-0.2..0.45),
            a: rng.gen_range(0.03..0.22),
            b: rng.gen_range(0.03..0.22),
            x0: r * t.cos() * a,
            y0: r * t.sin() * b,
            phi: rng.gen_range(0.0..std::f64::consts::PI),
        });
    }
    set
}

/// Centred disk of `radius_px` pixels on an `n x n` grid, supersampled.
pub fn disk<T: Scalar>(n: usize, radius_px: f64, value: f64, ss: usize) -> Image<T> {
    let r = 2.0 * radius_px / n as f64;
    rasterize(&[Ellipse { intensity: value, a: r, b: r, x0: 0.0, y0: 0.0, phi: 0.0 }], n, n, ss)
}
