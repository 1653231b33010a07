use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tomo::phantom::{disk, shepp_logan};
use tomo::{back_project, fbp, forward_project, subsample_views, Filter, Geometry, Image, Sinogram};

fn geometries() -> Vec<(&'static str, Geometry)> {
    let par = Geometry::desk();
    let fan = Geometry::fan(64, 180, 128, 200.0, 100.0);
    let sparse = |g: Geometry| {
        let n = g.n_views_full;
        let picks = (0..32).map(|i| ((i * n) as f64 / 32.0).round() as usize).collect();
        g.with_view_subset(picks)
    };
    let limited = |g: Geometry| g.with_angular_range(0.0, PI / 2.0);
    vec![
        ("parallel dense", par.clone()),
        ("parallel 32-view", sparse(par.clone())),
        ("parallel limited", limited(par)),
        ("fan dense", fan.clone()),
        ("fan 32-view", sparse(fan.clone())),
        ("fan limited", limited(fan)),
    ]
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dot_gap<T: tomo::Scalar>(g: &Geometry, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_vec(g.image_len(), &mut rng);
    let y = random_vec(g.sinogram_len(), &mut rng);
    let xt: Vec<T> = x.iter().map(|&v| T::from_f64(v).unwrap()).collect();
    let yt: Vec<T> = y.iter().map(|&v| T::from_f64(v).unwrap()).collect();
    let ax: Vec<f64> = g.project_slice(&xt).iter().map(|v| v.to_f64().unwrap()).collect();
    let aty: Vec<f64> = g.backproject_slice(&yt).iter().map(|v| v.to_f64().unwrap()).collect();
    let xr: Vec<f64> = xt.iter().map(|v| v.to_f64().unwrap()).collect();
    let yr: Vec<f64> = yt.iter().map(|v| v.to_f64().unwrap()).collect();
    let (l, r) = (dot(&ax, &yr), dot(&xr, &aty));
    (l - r).abs() / l.abs().max(r.abs())
}

#[test]
fn dot_test_all_geometries() {
    for (name, g) in geometries() {
        let g32 = dot_gap::<f32>(&g, 1);
        let g64 = dot_gap::<f64>(&g, 2);
        assert!(g32 < 1e-5, "{name}: f32 gap {g32:e}");
        assert!(g64 < 1e-10, "{name}: f64 gap {g64:e}");
    }
}

#[test]
fn fbp_adjoint_dot_test() {
    for (name, g) in geometries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = random_vec(g.sinogram_len(), &mut rng);
        let x = random_vec(g.image_len(), &mut rng);
        let l = dot(&g.fbp_slice(&y, Filter::RamLak), &x);
        let r = dot(&y, &g.fbp_adjoint_slice(&x, Filter::RamLak));
        assert!((l - r).abs() / l.abs().max(r.abs()) < 1e-10, "{name}: {l} vs {r}");
    }
}

#[test]
fn zero_in_zero_out() {
    let g = Geometry::desk();
    let x = Image::<f64>::zeros(64, 64);
    assert!(forward_project(&x, &g).unwrap().data.iter().all(|&v| v == 0.0));
    let y = Sinogram::<f64>::zeros(g.n_views(), g.n_det);
    assert!(back_project(&y, &g).unwrap().data.iter().all(|&v| v == 0.0));
    assert!(fbp(&y, &g, Filter::RamLak).unwrap().data.iter().all(|&v| v == 0.0));
}

#[test]
fn disk_central_chord() {
    let g = Geometry::desk();
    let r = 20.0;
    let x = disk::<f64>(64, r, 1.0, 8);
    let y = forward_project(&x, &g).unwrap();
    // detector coordinates are symmetric about zero with an even count, so the
    // two middle bins straddle the centre at u = +-0.5 mm
    let chord = 2.0 * (r * r - 0.25f64).sqrt();
    for v in 0..g.n_views() {
        let mid = 0.5 * (y.row(v)[47] + y.row(v)[48]);
        assert!((mid - chord).abs() / chord < 0.02, "view {v}: {mid} vs {chord}");
    }
}

#[test]
fn uniform_image_axis_aligned_ray() {
    let g = Geometry::desk();
    let x = Image::new(64, 64, vec![1.0f64; 64 * 64]).unwrap();
    let y = forward_project(&x, &g).unwrap();
    // view 0 rays run along +y, crossing the full 64 mm height
    for d in 20..76 {
        assert!((y.row(0)[d] - 64.0).abs() < 1e-9, "bin {d}: {}", y.row(0)[d]);
    }
}

#[test]
fn single_bin_footprint() {
    let g = Geometry::desk();
    let (v, d) = (30, 50);
    let mut y = Sinogram::<f64>::zeros(g.n_views(), g.n_det);
    y.data[v * g.n_det + d] = 1.0;
    let img = back_project(&y, &g).unwrap();
    let beta = g.view_angle(v);
    let u = g.det_coord(d);
    for r in 0..64 {
        for c in 0..64 {
            let (xc, yc) = (c as f64 - 31.5, r as f64 - 31.5);
            let dist = (xc * beta.cos() + yc * beta.sin() - u).abs();
            if img.get(r, c) != 0.0 {
                // interpolation reaches at most one pixel diagonal off the ray
                assert!(dist < std::f64::consts::SQRT_2, "pixel ({r},{c}) at {dist}");
            }
        }
    }
    assert!(img.data.iter().any(|&v| v > 0.0));
}

fn psnr(x: &[f64], r: &[f64]) -> f64 {
    let mse = x.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
    10.0 * (1.0 / mse).log10()
}

#[test]
fn fbp_quality_and_monotone_in_views() {
    let g = Geometry::desk();
    let truth = shepp_logan::<f64>(64);
    let y = forward_project(&truth, &g).unwrap();
    let dense = fbp(&y, &g, Filter::RamLak).unwrap();
    let p180 = psnr(&dense.data, &truth.data);
    assert!(p180 >= 25.0, "dense FBP PSNR {p180}");
    let mut last = f64::NEG_INFINITY;
    for nv in [16, 32, 64, 180] {
        let (ys, gs) = subsample_views(&y, &g, nv).unwrap();
        let p = psnr(&fbp(&ys, &gs, Filter::RamLak).unwrap().data, &truth.data);
        assert!(p > last, "n_v={nv}: {p} after {last}");
        last = p;
    }
    assert!((last - p180).abs() < 1e-12);
}

#[test]
fn fan_fbp_reconstructs() {
    let g = Geometry::fan(64, 360, 128, 200.0, 100.0);
    let truth = shepp_logan::<f64>(64);
    let y = forward_project(&truth, &g).unwrap();
    let p = psnr(&fbp(&y, &g, Filter::RamLak).unwrap().data, &truth.data);
    assert!(p >= 25.0, "fan FBP PSNR {p}");
    let ph = psnr(&fbp(&y, &g, Filter::Hann).unwrap().data, &truth.data);
    assert!(ph > 18.0, "hann FBP PSNR {ph}");
}

#[test]
fn fbp_needs_two_views() {
    let g = Geometry::desk().with_view_subset(vec![0]);
    let y = Sinogram::<f64>::zeros(1, g.n_det);
    assert!(fbp(&y, &g, Filter::RamLak).is_err());
}

#[test]
fn subsample_indices() {
    let g = Geometry::parallel(16, 512, 24);
    let y = Sinogram::new(512, 24, (0..512 * 24).map(|i| (i / 24) as f64).collect()).unwrap();
    let (y32, g32) = subsample_views(&y, &g, 32).unwrap();
    assert_eq!(g32.view_subset, (0..32).map(|i| 16 * i).collect::<Vec<_>>());
    assert_eq!(y32.row(5)[0], 80.0);
    let (y128, g128) = subsample_views(&y, &g, 128).unwrap();
    assert_eq!(y128.n_v, 128);
    assert!(g128.view_subset.windows(2).all(|w| w[1] - w[0] == 4));
    let (same, gs) = subsample_views(&y, &g, 512).unwrap();
    assert_eq!(same, y);
    assert_eq!(gs, g);
    assert!(subsample_views(&y, &g, 0).is_err());
    assert!(subsample_views(&y, &g, 513).is_err());
}

#[test]
fn dimension_errors() {
    let g = Geometry::desk();
    assert!(forward_project(&Image::<f32>::zeros(32, 32), &g).is_err());
    assert!(back_project(&Sinogram::<f32>::zeros(10, 96), &g).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn projection_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = Geometry::parallel(16, 24, 24);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_vec(256, &mut rng);
        let z = random_vec(256, &mut rng);
        let comb: Vec<f64> = x.iter().zip(&z).map(|(p, q)| a * p + b * q).collect();
        let lhs = g.project_slice(&comb);
        let (ax, az) = (g.project_slice(&x), g.project_slice(&z));
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (a * ax[i] + b * az[i])).abs() < 1e-10);
        }
    }
}
