// Simulate a sparse-view scan of the Shepp-Logan phantom and compare FBP
// quality across view counts.
//
//     cargo run --release --example sparse_view_fbp

use sparse_ct::metrics::psnr;
use tomo::{fbp, forward_project, phantom, simulate_measurement, subsample_views, Filter, Geometry, NoiseConfig};

/// PSNR of FBP against the phantom for each view count, noiseless and noisy.
pub fn run_example() -> Result<Vec<(usize, f64, f64)>, Box<dyn std::error::Error>> {
    let truth = phantom::shepp_logan::<f64>(64);
    let full = Geometry::desk();
    let clean = forward_project(&truth, &full)?;
    let noisy = simulate_measurement(&clean, &NoiseConfig::n1(), 42);
    let mut rows = Vec::new();
    println!("views  clean PSNR  noisy PSNR");
    for n_v in [16, 32, 64, 180] {
        let (y, g) = subsample_views(&clean, &full, n_v)?;
        let a = psnr(&fbp(&y, &g, Filter::RamLak)?.data, &truth.data, 1.0)?;
        let (y, g) = subsample_views(&noisy, &full, n_v)?;
        let b = psnr(&fbp(&y, &g, Filter::RamLak)?.data, &truth.data, 1.0)?;
        println!("{n_v:5}  {a:10.2}  {b:10.2}");
        rows.push((n_v, a, b));
    }
    Ok(rows)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
