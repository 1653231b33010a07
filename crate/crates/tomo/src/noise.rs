use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::geometry::Sinogram;
use crate::{cast, f64_of, Scalar};

/// Maximum scaled line integral before Poisson sampling.
pub const DEFAULT_ATTENUATION_CAP: f64 = 4.0;

/// Measurement noise model.
///
/// Line integrals are scaled so their maximum equals `attenuation_cap`, photon
/// counts are drawn as `Poisson(n0 * exp(-y))`, log-converted (with a one-photon
/// floor) and scaled back. Zero-mean Gaussian noise with standard deviation
/// `gaussian_frac * mean(|y|)` is then added.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    /// Incident photon count; `0` disables the Poisson stage.
    pub poisson_n0: f64,
    pub gaussian_frac: f64,
    pub attenuation_cap: f64,
}

impl NoiseConfig {
    pub const NONE: Self = Self { poisson_n0: 0.0, gaussian_frac: 0.0, attenuation_cap: DEFAULT_ATTENUATION_CAP };

    /// Low-noise condition: 1e6 incident photons plus 5% Gaussian noise.
    pub fn n1() -> Self {
        Self { poisson_n0: 1e6, gaussian_frac: 0.05, attenuation_cap: DEFAULT_ATTENUATION_CAP }
    }

    /// High-noise condition: 5e5 incident photons plus 5% Gaussian noise.
    pub fn n2() -> Self {
        Self { poisson_n0: 5e5, ..Self::n1() }
    }

    pub fn is_noiseless(&self) -> bool {
        self.poisson_n0 == 0.0 && self.gaussian_frac == 0.0
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::NONE
    }
}

/// Applies the noise model; deterministic for a fixed `seed`.
pub fn simulate_measurement<T: Scalar>(y: &Sinogram<T>, cfg: &NoiseConfig, seed: u64) -> Sinogram<T> {
    if cfg.is_noiseless() {
        return y.clone();
    }
    let mut clean: Vec<f64> = y.data.iter().map(|&v| f64_of(v)).collect();
    let negatives = clean.iter().filter(|&&v| v < 0.0).count();
    if negatives > 0 {
        log::warn!("clamping {negatives} negative line integrals to zero before noise simulation");
        clean.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = clean.clone();
    let peak = clean.iter().copied().fold(0.0, f64::max);
    if cfg.poisson_n0 > 0.0 && peak > 0.0 {
        let scale = cfg.attenuation_cap / peak;
        for v in noisy.iter_mut() {
            let lam = cfg.poisson_n0 * (-*v * scale).exp();
            let counts = if lam > 0.0 {
                Poisson::new(lam).map(|p| p.sample(&mut rng)).unwrap_or(0.0)
            } else {
                0.0
            };
            *v = -(counts.max(1.0) / cfg.poisson_n0).ln() / scale;
        }
    }
    if cfg.gaussian_frac > 0.0 {
        let mean_abs = clean.iter().map(|v| v.abs()).sum::<f64>() / clean.len().max(1) as f64;
        let sigma = cfg.gaussian_frac * mean_abs;
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("positive sigma");
            noisy.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
        }
    }
    Sinogram { n_v: y.n_v, n_d: y.n_d, data: noisy.into_iter().map(cast).collect() }
}
