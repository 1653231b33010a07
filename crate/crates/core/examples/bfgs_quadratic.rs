// Inverse-Hessian updates on a small quadratic with exact steps: the secant
// identity holds after every update and `H` reaches `Q^{-1}` in `d` steps.
//
//     cargo run --release --example bfgs_quadratic

use sparse_ct::solvers::{BfgsState, CurvaturePolicy};

/// Returns the final gradient norm and `max |HQ - I|`.
pub fn run_example() -> Result<(f64, f64), Box<dyn std::error::Error>> {
    // Q = tridiag(-1, 4, -1)
    let d = 6;
    let q = |i: usize, j: usize| match i.abs_diff(j) {
        0 => 4.0,
        1 => -1.0,
        _ => 0.0,
    };
    let mul = |v: &[f64]| (0..d).map(|i| (0..d).map(|j| q(i, j) * v[j]).sum()).collect::<Vec<f64>>();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let b: Vec<f64> = (0..d).map(|i| (i + 1) as f64).collect();
    let grad = |x: &[f64]| mul(x).iter().zip(&b).map(|(a, c)| a - c).collect::<Vec<f64>>();

    let mut state = BfgsState::identity(d, CurvaturePolicy::default());
    let mut x = vec![0.0; d];
    let mut g = grad(&x);
    println!("it  |grad|     secant     SI");
    for it in 1..=d {
        let dir: Vec<f64> = state.apply(&g).iter().map(|v| -v).collect();
        let alpha = -dot(&g, &dir) / dot(&dir, &mul(&dir));
        let s: Vec<f64> = dir.iter().map(|v| alpha * v).collect();
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        let g_new = grad(&x);
        let z: Vec<f64> = g_new.iter().zip(&g).map(|(a, c)| a - c).collect();
        state.update(&s, &z);
        g = g_new;
        let diag = state.diagnostics();
        println!("{it:2}  {:.2e}  {:.2e}  {:.1e}", dot(&g, &g).sqrt(), diag.secant_residual, diag.symmetry_index);
    }
    let h = state.h();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let hq: f64 = (0..d).map(|k| h[i * d + k] * q(k, j)).sum();
            worst = worst.max((hq - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    println!("max |HQ - I| = {worst:.1e}");
    Ok((dot(&g, &g).sqrt(), worst))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
