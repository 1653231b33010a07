mod common;

use common::brute_ssim;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sparse_ct::metrics::{mean_std, ms_ssim, psnr, ssim, SsimConfig};
use sparse_ct::nps::{nps_radial, RoiLayout};
use sparse_ct::ood::{add_circle_ood, circle_mask, eval_ood_crop, mask_bbox, sample_circle, Circle};

fn uniform(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

#[test]
fn psnr_closed_forms() {
    let x = uniform(256, 1);
    assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
    let off: Vec<f64> = x.iter().map(|v| v + 0.1).collect();
    assert!((psnr(&off, &x, 1.0).unwrap() - 10.0 * (1.0f64 / 0.01).log10()).abs() < 1e-9);
    let off: Vec<f64> = x.iter().map(|v| v - 0.01).collect();
    assert!((psnr(&off, &x, 1.0).unwrap() - 40.0).abs() < 1e-9);
    // range 2 adds 20 log10(2)
    assert!((psnr(&off, &x, 2.0).unwrap() - 40.0 - 20.0 * 2f64.log10()).abs() < 1e-9);
    assert!(psnr(&x, &x[..10], 1.0).is_err());
}

#[test]
fn ssim_matches_brute_force_window() {
    let cfg = SsimConfig::default();
    let x = uniform(256, 2);
    let noisy: Vec<f64> = x.iter().zip(uniform(256, 3)).map(|(a, b)| a + 0.2 * (b - 0.5)).collect();
    let other = uniform(256, 4);
    for y in [&noisy, &other] {
        let got = ssim(&x, y, 16, 16, &cfg).unwrap();
        assert!((got - brute_ssim(&x, y, 16, 16, &cfg)).abs() < 1e-6);
    }
    // anti-correlated zero-mean checkerboards
    let board: Vec<f64> = (0..256).map(|i| if (i / 16 + i % 16) % 2 == 0 { 0.3 } else { -0.3 }).collect();
    let neg: Vec<f64> = board.iter().map(|v| -v).collect();
    let got = ssim(&board, &neg, 16, 16, &cfg).unwrap();
    assert!(got < 0.0);
    assert!((got - brute_ssim(&board, &neg, 16, 16, &cfg)).abs() < 1e-6);
    let rect = uniform(12 * 20, 5);
    let rect2 = uniform(12 * 20, 6);
    assert!((ssim(&rect, &rect2, 12, 20, &cfg).unwrap() - brute_ssim(&rect, &rect2, 12, 20, &cfg)).abs() < 1e-6);
}

#[test]
fn ssim_constant_images_reduce_to_luminance() {
    let cfg = SsimConfig::default();
    let (a, b) = (vec![0.5; 256], vec![0.6; 256]);
    let c1 = 1e-4;
    let expect = (2.0 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
    let got = ssim(&a, &b, 16, 16, &cfg).unwrap();
    assert!((got - expect).abs() < 1e-12);
    assert!((got - 0.9836).abs() < 5e-5);
    assert!(ssim(&a, &b, 8, 32, &cfg).is_err());
}

#[test]
fn ms_ssim_levels() {
    let cfg = SsimConfig::default();
    let x = uniform(176 * 176, 7);
    let y: Vec<f64> = x.iter().zip(uniform(176 * 176, 8)).map(|(a, b)| a + 0.1 * (b - 0.5)).collect();
    assert!((ms_ssim(&x, &x, 176, 176, 5, &cfg).unwrap() - 1.0).abs() < 1e-12);
    let m5 = ms_ssim(&x, &y, 176, 176, 5, &cfg).unwrap();
    assert!(m5 > 0.0 && m5 < 1.0);
    // one level is plain SSIM
    assert!((ms_ssim(&x, &y, 176, 176, 1, &cfg).unwrap() - ssim(&x, &y, 176, 176, &cfg).unwrap()).abs() < 1e-12);
    assert!(ms_ssim(&x[..64 * 64], &y[..64 * 64], 64, 64, 5, &cfg).is_err());
    assert!(ms_ssim(&x, &y, 176, 176, 6, &cfg).is_err());
}

#[test]
fn mean_std_skips_non_finite() {
    let (m, s) = mean_std(&[1.0, 3.0, f64::NAN, f64::INFINITY]);
    assert_eq!((m, s), (2.0, 1.0));
    assert!(mean_std(&[f64::NAN]).0.is_nan());
}

#[test]
fn nps_integral_recovers_white_noise_variance() {
    let sigma = 0.7;
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let imgs: Vec<Vec<f64>> = (0..4).map(|_| (0..64 * 64).map(|_| normal.sample(&mut rng)).collect()).collect();
    let refs: Vec<&[f64]> = imgs.iter().map(|v| v.as_slice()).collect();
    let layout = RoiLayout::grid(64, 64, 16);
    let nps = nps_radial(&refs, 64, 64, &layout, 1.0).unwrap();
    assert_eq!(nps.rois, 64);
    let rel = (nps.integral() - sigma * sigma).abs() / (sigma * sigma);
    assert!(rel < 0.05, "relative error {rel}");
    assert_eq!(nps.freqs.len(), 9);
    assert!(nps.curve[0] < 1e-20, "mean subtraction removes DC");
    // scale enters squared
    let scaled = nps_radial(&refs, 64, 64, &layout, 10.0).unwrap();
    assert!((scaled.integral() / nps.integral() - 100.0).abs() < 1e-9);
}

#[test]
fn nps_of_constant_images_is_zero_and_layout_counts() {
    let img = vec![3.25; 64 * 64];
    let nps = nps_radial(&[&img], 64, 64, &RoiLayout::standard(64, 64), 1.0).unwrap();
    assert!(nps.map.iter().all(|&v| v.abs() < 1e-20));
    assert_eq!(RoiLayout::standard(256, 256).corners.len(), 29);
    assert_eq!(RoiLayout::standard(256, 256).size, 20);
    let l = RoiLayout::standard(64, 64);
    assert!(l.corners.iter().all(|&(r, c)| r + l.size <= 64 && c + l.size <= 64));
    let bad = RoiLayout { size: 8, corners: vec![(60, 0)] };
    assert!(nps_radial(&[&img], 64, 64, &bad, 1.0).is_err());
    let mut out = Vec::new();
    nps.write_csv(&mut out).unwrap();
    assert!(String::from_utf8(out).unwrap().starts_with("freq_cycles_per_px,nps_hu2px2\n"));
}

#[test]
fn forced_disk_has_lattice_count() {
    let lattice = (-5i64..=5).flat_map(|x| (-5i64..=5).map(move |y| (x, y))).filter(|(x, y)| x * x + y * y <= 25).count();
    assert_eq!(lattice, 81);
    let c = Circle { cx: 10, cy: 10, radius: 5 };
    let mask = circle_mask(32, 32, c);
    let mut img = vec![0.0; 32 * 32];
    sparse_ct::ood::paint(&mut img, &mask, 1.0);
    assert_eq!(img.iter().filter(|&&v| v == 1.0).count(), lattice);
    assert_eq!(mask_bbox(&mask, 32, 32, 0).unwrap().height(), 11);
}

#[test]
fn circle_sampling_is_reproducible_and_inside() {
    let zero = vec![0.0; 64 * 64];
    let (a, ma, ca) = add_circle_ood(&zero, 64, 64, 77, 1.0);
    let (b, mb, cb) = add_circle_ood(&zero, 64, 64, 77, 1.0);
    assert_eq!((a, ma, ca), (b, mb, cb));
    for seed in 0..200 {
        let c = sample_circle(64, 64, seed);
        assert!((5..20).contains(&c.radius));
        assert!(c.cx >= c.radius && c.cx + c.radius < 64 && c.cy >= c.radius && c.cy + c.radius < 64);
    }
    // small images shrink the range and still fit
    for seed in 0..50 {
        let c = sample_circle(16, 16, seed);
        assert!(c.cx + c.radius < 16 && c.cy + c.radius < 16);
    }
}

#[test]
fn crop_scoring() {
    let cfg = SsimConfig::default();
    let x = uniform(64 * 64, 10);
    let full = vec![true; 64 * 64];
    let m = eval_ood_crop(&x, &x, 64, 64, &full, 4, &cfg).unwrap();
    assert_eq!(m.psnr_db, f64::INFINITY);
    assert_eq!((m.bbox.height(), m.bbox.width()), (64, 64));
    assert!(eval_ood_crop(&x, &x, 64, 64, &vec![false; 64 * 64], 4, &cfg).is_err());
    // 3x3 box at the corner: too small for SSIM, padding clipped
    let mut tiny = vec![false; 64 * 64];
    tiny[0] = true;
    let m = eval_ood_crop(&x, &uniform(64 * 64, 11), 64, 64, &tiny, 2, &cfg).unwrap();
    assert_eq!((m.bbox.r0, m.bbox.r1, m.bbox.c0, m.bbox.c1), (0, 3, 0, 3));
    assert!(m.ssim.is_none());
}

#[test]
fn crop_is_harsher_than_full_image_on_streaked_fbp() {
    use tomo::{fbp, forward_project, subsample_views, Filter, Geometry};
    // moderate streaking; at 16 views the background streaks dominate the
    // full-image score and the ordering flips
    let size = 64;
    let truth = tomo::phantom::shepp_logan::<f64>(size);
    let full = Geometry::parallel(size, 180, 96);
    for seed in 0..3 {
        let (painted, mask, _) = add_circle_ood(&truth.data, size, size, seed, 1.0);
        let img = tomo::Image { data: painted.clone(), ..truth.clone() };
        let (y, g) = subsample_views(&forward_project(&img, &full).unwrap(), &full, 60).unwrap();
        let recon = fbp(&y, &g, Filter::RamLak).unwrap();
        let crop = eval_ood_crop(&recon.data, &painted, size, size, &mask, 4, &SsimConfig::default()).unwrap();
        let whole = psnr(&recon.data, &painted, 1.0).unwrap();
        assert!(crop.psnr_db < whole, "seed {seed}: {} vs {whole}", crop.psnr_db);
        assert!(crop.ssim.is_some());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn ssim_reflexive_and_psnr_symmetric(seed in any::<u64>(), scale in 0.01f64..2.0) {
        let x: Vec<f64> = uniform(16 * 16, seed).iter().map(|v| v * scale).collect();
        let y = uniform(16 * 16, seed ^ 0x5555);
        let cfg = SsimConfig::default();
        prop_assert!((ssim(&x, &x, 16, 16, &cfg).unwrap() - 1.0).abs() < 1e-12);
        prop_assert_eq!(psnr(&x, &y, 1.0).unwrap(), psnr(&y, &x, 1.0).unwrap());
    }
}
