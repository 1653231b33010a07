// The unrolled latent quasi-Newton network on one scan: a cold start
// reproduces FBP exactly, and a perturbed network reports per-iteration
// inverse-Hessian diagnostics.
//
//     cargo run --release --example latent_bfgs_unroll

use sparse_ct::train::Scanner;
use sparse_ct::unroll::lambda_name;
use sparse_ct::{InitMode, Problem, UnrolledNet};
use tomo::{phantom, Geometry, NoiseConfig};

/// Returns whether the cold start matched FBP and the largest symmetry index seen.
pub fn run_example() -> Result<(bool, f64), Box<dyn std::error::Error>> {
    let net = UnrolledNet::desk();
    let (lh, lw) = net.latent_dims()?;
    println!("T = {}, latent {lh}x{lw}, H is {}x{}", net.unroll.iterations, lh * lw, lh * lw);

    let scanner = Scanner { full: Geometry::desk(), n_views: 16, noise: NoiseConfig::n1() };
    let truth = phantom::shepp_logan::<f64>(64);
    let (y, g) = scanner.measure(&truth, 3)?;
    let pb = Problem::new(&y, &g, net.unroll.pseudo_inverse)?;

    let cold = net.init_params::<f64>(0, InitMode::ColdStart)?;
    let same = net.reconstruct(&cold, &pb)?.x == pb.x0;
    println!("cold start equals FBP: {same}");

    let mut params = net.init_params::<f64>(0, InitMode::Standard)?;
    for t in 0..net.unroll.iterations {
        let id = params.id(&lambda_name(t)).expect("lambda");
        params.get_mut(id).data_mut()[0] = 0.5;
    }
    let rec = net.reconstruct(&params, &pb)?;
    let mut worst_si: f64 = 0.0;
    println!(" t  update    |s|        SI        secant");
    for r in &rec.records {
        let d = r.diagnostics;
        worst_si = worst_si.max(d.symmetry_index);
        let what = match r.update {
            Some(u) => format!("{u:?}").split_whitespace().next().unwrap_or("").trim_end_matches('{').to_string(),
            None => "-".into(),
        };
        println!("{:2}  {what:8}  {:.2e}  {:.1e}  {:.1e}", r.t, r.step_norm, d.symmetry_index, d.secant_residual);
    }
    Ok((same, worst_si))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
