// Gradient descent versus full-dimensional BFGS on the regularised
// least-squares objective, started from FBP.
//
//     cargo run --release --example variational_solvers

use sparse_ct::metrics::psnr;
use sparse_ct::solvers::{gradient_descent, qn_reconstruct, LineSearch, Objective, Regularizer};
use tomo::{fbp, forward_project, phantom, subsample_views, Filter, Geometry};

pub struct Summary {
    pub fbp_psnr: f64,
    pub gd_objective: f64,
    pub qn_objective: f64,
    pub qn_psnr: f64,
    pub max_symmetry_index: f64,
}

pub fn run_example() -> Result<Summary, Box<dyn std::error::Error>> {
    let size = 32;
    let truth = phantom::shepp_logan::<f64>(size);
    let full = Geometry::parallel(size, 120, 48);
    let (y, g) = subsample_views(&forward_project(&truth, &full)?, &full, 12)?;
    let x0 = fbp(&y, &g, Filter::RamLak)?.data;
    let reg = Regularizer::SmoothedTv { mu: 0.5, delta: 0.02 };
    let obj = Objective::new(&g, &y.data, 1.0, reg, size, size)?;

    let iters = 30;
    let gd = gradient_descent(&obj, &x0, 1.0 / obj.lipschitz(), iters)?;
    let qn = qn_reconstruct(&obj, &x0, iters, LineSearch::StrongWolfe)?;
    let max_si = qn.trace.iter().map(|r| r.symmetry_index).fold(0.0, f64::max);

    let s = Summary {
        fbp_psnr: psnr(&x0, &truth.data, 1.0)?,
        gd_objective: *gd.trace.last().unwrap(),
        qn_objective: qn.f,
        qn_psnr: psnr(&qn.x, &truth.data, 1.0)?,
        max_symmetry_index: max_si,
    };
    println!("FBP            PSNR {:.2} dB", s.fbp_psnr);
    println!("GD  ({iters} it)   J = {:.4e}  PSNR {:.2} dB", s.gd_objective, psnr(&gd.x, &truth.data, 1.0)?);
    println!("BFGS ({iters} it)  J = {:.4e}  PSNR {:.2} dB  max SI {:.1e}", s.qn_objective, s.qn_psnr, max_si);
    Ok(s)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
