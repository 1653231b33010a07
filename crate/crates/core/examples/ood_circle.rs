// Out-of-distribution probe: paint a bright disk into the phantom, scan and
// reconstruct, then score the whole image and the padded disk crop.
//
//     cargo run --release --example ood_circle

use sparse_ct::metrics::{psnr, SsimConfig};
use sparse_ct::ood::{add_circle_ood, eval_ood_crop, CropMetrics};
use sparse_ct::train::Scanner;
use tomo::{fbp, phantom, Filter, Geometry, NoiseConfig};

pub fn run_example() -> Result<CropMetrics, Box<dyn std::error::Error>> {
    let truth = phantom::shepp_logan::<f64>(64);
    let (data, mask, circle) = add_circle_ood(&truth.data, 64, 64, 2024, 1.0);
    println!("disk at ({}, {}) radius {} covering {} px", circle.cx, circle.cy, circle.radius, mask.iter().filter(|&&m| m).count());
    let painted = tomo::Image { data: data.clone(), ..truth };
    let scanner = Scanner { full: Geometry::desk(), n_views: 60, noise: NoiseConfig::n1() };
    let (y, g) = scanner.measure(&painted, 1)?;
    let x = fbp(&y, &g, Filter::RamLak)?.data;
    let crop = eval_ood_crop(&x, &data, 64, 64, &mask, 4, &SsimConfig::default())?;
    println!("full image PSNR {:.2} dB", psnr(&x, &data, 1.0)?);
    println!("crop {:?}: PSNR {:.2} dB, SSIM {:?}", crop.bbox, crop.psnr_db, crop.ssim);
    Ok(crop)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
