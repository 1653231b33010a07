// Image-quality metrics and the radial noise power spectrum of FBP noise
// over repeated noisy scans.
//
//     cargo run --release --example noise_power_spectrum

use sparse_ct::metrics::{psnr, ssim, SsimConfig};
use sparse_ct::nps::{nps_radial, RoiLayout};
use tomo::{fbp, forward_project, phantom, simulate_measurement, Filter, Geometry, NoiseConfig};

/// Returns the NPS curve (cycles/pixel, value).
pub fn run_example() -> Result<Vec<(f64, f64)>, Box<dyn std::error::Error>> {
    let truth = phantom::shepp_logan::<f64>(64);
    let g = Geometry::desk();
    let clean = forward_project(&truth, &g)?;
    let reference = fbp(&clean, &g, Filter::RamLak)?;

    let mut noise = Vec::new();
    for seed in 0..8 {
        let x = fbp(&simulate_measurement(&clean, &NoiseConfig::n1(), seed), &g, Filter::RamLak)?;
        if seed == 0 {
            let cfg = SsimConfig::default();
            println!("noisy vs noiseless FBP: PSNR {:.2} dB, SSIM {:.4}", psnr(&x.data, &reference.data, 1.0)?, ssim(&x.data, &reference.data, 64, 64, &cfg)?);
        }
        noise.push(x.data.iter().zip(&reference.data).map(|(a, b)| a - b).collect::<Vec<f64>>());
    }
    let refs: Vec<&[f64]> = noise.iter().map(Vec::as_slice).collect();
    let layout = RoiLayout::standard(64, 64);
    let nps = nps_radial(&refs, 64, 64, &layout, 1000.0)?;
    let var = noise.iter().flatten().map(|v| (1000.0 * v).powi(2)).sum::<f64>() / (noise.len() * 64 * 64) as f64;
    println!("{} ROIs of {}x{} px; NPS integral {:.3e}, pixel variance {:.3e}", nps.rois, nps.size, nps.size, nps.integral(), var);
    println!("freq  NPS");
    for (f, v) in nps.freqs.iter().zip(&nps.curve) {
        println!("{f:.3} {v:.3e}");
    }
    Ok(nps.freqs.iter().copied().zip(nps.curve.iter().copied()).collect())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
