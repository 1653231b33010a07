use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_ct::solvers::*;
use sparse_ct::Error;
use tomo::{phantom, Filter, Geometry};

fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Random SPD `Q = M'M + I` and `b`.
fn quadratic(d: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let q = m.transpose() * &m + DMatrix::identity(d, d);
    let b = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
    (q, b)
}

#[test]
fn objective_closed_forms() {
    let y = vec![0.5, -1.0, 2.0];
    let id = Identity(3);
    let obj = Objective::new(&id, &y, 1.0, Regularizer::None, 1, 3).unwrap();
    assert_eq!(obj.value(&y).unwrap(), 0.0);
    let x = vec![1.0, 2.0, 3.0];
    let g = obj.gradient(&x).unwrap();
    assert_eq!(g, vec![0.5, 3.0, 1.0]);

    // ||x||^2 = 9, mu = 2, no data term: (2/2) * 9
    let x = vec![1.0, 2.0, 2.0];
    let tik = Objective::new(&id, &y, 0.0, Regularizer::Tikhonov { mu: 2.0 }, 1, 3).unwrap();
    assert_eq!(tik.value(&x).unwrap(), 9.0);

    let none = Objective::new(&id, &y, 0.0, Regularizer::None, 1, 3).unwrap();
    assert_eq!(none.value(&[7.0, -3.0, 1.0]).unwrap(), 0.0);
}

#[test]
fn tv_gradient_vanishes_on_constant_image() {
    let y = vec![0.0; 36];
    let id = Identity(36);
    let obj = Objective::new(&id, &y, 0.0, Regularizer::SmoothedTv { mu: 1.0, delta: 1e-3 }, 6, 6).unwrap();
    assert!(obj.gradient(&vec![0.7; 36]).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn objective_rejects_bad_inputs() {
    let y = vec![0.0; 4];
    let id = Identity(4);
    assert!(matches!(Objective::new(&id, &y, -1.0, Regularizer::None, 2, 2), Err(Error::InvalidArgument(_))));
    assert!(Objective::new(&id, &y, 1.0, Regularizer::SmoothedTv { mu: 1.0, delta: 0.0 }, 2, 2).is_err());
    assert!(matches!(Objective::new(&id, &y, 1.0, Regularizer::None, 3, 2), Err(Error::Shape(_))));
    let obj = Objective::new(&id, &y, 1.0, Regularizer::None, 2, 2).unwrap();
    assert!(matches!(obj.value(&[1.0; 5]), Err(Error::Shape(_))));
}

/// Central differences over every coordinate of a 16x16 CT objective.
#[test]
fn ct_objective_gradient_matches_finite_differences() {
    let g = Geometry::parallel(16, 24, 24);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y = rand_vec(g.sinogram_len(), &mut rng);
    let x: Vec<f64> = rand_vec(256, &mut rng).iter().map(|v| 0.5 + 0.5 * v).collect();
    for reg in [Regularizer::Tikhonov { mu: 0.3 }, Regularizer::SmoothedTv { mu: 0.2, delta: 0.05 }] {
        let obj = Objective::new(&g, &y, 0.7, reg, 16, 16).unwrap();
        let analytic = obj.gradient(&x).unwrap();
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += eps;
            xm[i] -= eps;
            let fd = (obj.value(&xp).unwrap() - obj.value(&xm).unwrap()) / (2.0 * eps);
            worst = worst.max((fd - analytic[i]).abs() / analytic[i].abs().max(1e-3 * scale));
        }
        assert!(worst < 1e-6, "{reg:?}: relative error {worst:e}");
    }
}

#[test]
fn gradient_descent_on_identity_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y = rand_vec(50, &mut rng);
    let id = Identity(50);
    let obj = Objective::new(&id, &y, 2.0, Regularizer::Tikhonov { mu: 1.0 }, 5, 10).unwrap();
    // Hessian is (lambda + mu) I, so L = 3 and the contraction factor is |1 - 3 alpha|
    let alpha = 0.5;
    let x0 = vec![0.0; 50];
    let res = gradient_descent(&obj, &x0, alpha, 20).unwrap();
    assert!(res.trace.windows(2).all(|w| w[1] < w[0]));
    let xstar: Vec<f64> = y.iter().map(|v| 2.0 * v / 3.0).collect();
    let err = |x: &[f64]| x.iter().zip(&xstar).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let expected = err(&x0) * 0.5f64.powi(20);
    assert!((err(&res.x) - expected).abs() < 1e-9 * err(&x0));

    let still = gradient_descent(&obj, &x0, 0.0, 5).unwrap();
    assert_eq!(still.x, x0);

    assert!(gradient_descent(&obj, &x0, -0.1, 5).is_err());
    assert!(gradient_descent(&obj, &x0, 0.1, 0).is_err());
    match gradient_descent(&obj, &x0, 1.5, 50) {
        Err(Error::Diverged { trace, .. }) => assert!(trace.len() >= 2),
        other => panic!("expected divergence, got {:?}", other.map(|r| r.trace)),
    }
}

#[test]
fn gradient_descent_monotone_on_shepp_logan() {
    let full = Geometry::parallel(64, 128, 96);
    let truth = phantom::shepp_logan::<f64>(64);
    let (y, g) = tomo::subsample_views(&tomo::forward_project(&truth, &full).unwrap(), &full, 32).unwrap();
    let obj = Objective::new(&g, &y.data, 1.0, Regularizer::Tikhonov { mu: 0.1 }, 64, 64).unwrap();
    let res = gradient_descent(&obj, &vec![0.0; 4096], 1.0 / obj.lipschitz(), 100).unwrap();
    assert!(res.trace.windows(2).all(|w| w[1] <= w[0]), "J not monotone");
    assert!(res.trace[100] < 0.5 * res.trace[0]);
}

#[test]
fn bfgs_update_fixed_point_and_secant() {
    let h = vec![1.0, 0.0, 0.0, 1.0];
    assert_eq!(bfgs_update(&h, &[1.0, 0.0], &[1.0, 0.0]), h);

    let mut state = BfgsState::identity(2, CurvaturePolicy::default());
    state.update(&[1.0, 0.0], &[1.0, 0.0]);
    assert_eq!(state.diagnostics(), HessianDiagnostics::default());
}

#[test]
fn nonpositive_curvature_is_skipped() {
    let mut state = BfgsState::identity(3, CurvaturePolicy::default());
    let out = state.update(&[1.0, 0.0, 0.0], &[-1.0, 0.5, 0.0]);
    assert_eq!(out, UpdateOutcome::Skipped { curvature: -1.0 });
    assert_eq!(state.skipped_updates(), 1);
    assert_eq!(state.h(), BfgsState::identity(3, CurvaturePolicy::default()).h());
    // the magnitude policy accepts negative curvature
    let mut lat = BfgsState::identity(3, CurvaturePolicy::Magnitude { eps: 1e-12 });
    assert!(matches!(lat.update(&[1.0, 0.0, 0.0], &[-1.0, 0.5, 0.0]), UpdateOutcome::Applied { .. }));
    assert!(matches!(lat.update(&[1e-7, 0.0, 0.0], &[1e-7, 0.0, 0.0]), UpdateOutcome::Skipped { .. }));
}

#[test]
fn symmetry_index_examples() {
    assert_eq!(symmetry_index(&[1.0, 0.0, 0.0, 1.0], 2, 2).unwrap(), 0.0);
    assert_eq!(symmetry_index(&[0.0, 1.0, 0.0, 0.0], 2, 2).unwrap(), 1.0);
    assert!(symmetry_index(&[0.0; 6], 2, 3).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_vec(25, &mut rng);
    let sym: Vec<f64> = (0..25).map(|k| a[k] + a[(k % 5) * 5 + k / 5]).collect();
    assert_eq!(symmetry_index(&sym, 5, 5).unwrap(), 0.0);
}

#[test]
fn bfgs_solves_random_quadratics() {
    for seed in 0..20 {
        let (q, b) = quadratic(16, seed);
        let direct = q.clone().lu().solve(&b).expect("SPD");
        let mut fg = |x: &[f64]| {
            let xv = DVector::from_column_slice(x);
            let qx = &q * &xv;
            Ok((0.5 * xv.dot(&qx) - b.dot(&xv), (qx - &b).as_slice().to_vec()))
        };
        let run = bfgs_minimize(&mut fg, &[0.0; 16], &BfgsOptions { max_iter: 40, ..Default::default() }).unwrap();
        let gnorm = run.grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(run.converged && gnorm < 1e-8, "seed {seed}: |g| = {gnorm:e} after {}", run.iterations);
        let err = run.x.iter().zip(direct.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "seed {seed}: |x - x*| = {err:e}");
        for r in &run.trace[1..] {
            assert!(r.secant_residual < 1e-10, "seed {seed}: secant {:e}", r.secant_residual);
            assert!(r.symmetry_index < 1e-8);
        }
        assert!(run.trace.windows(2).all(|w| w[1].objective <= w[0].objective));
    }
}

/// With exact line search on a quadratic, BFGS terminates within D + 2 steps
/// and `H` stays positive definite.
#[test]
fn exact_line_search_terminates_and_stays_positive_definite() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for (d, seed) in [(8, 1), (16, 2), (32, 3)] {
        let (q, b) = quadratic(d, seed);
        let mut state = BfgsState::identity(d, CurvaturePolicy::default());
        let mut x = DVector::zeros(d);
        let mut g = &q * &x - &b;
        let mut iters = 0;
        while g.norm() >= 1e-10 && iters < d + 2 {
            let dir = -DVector::from_vec(state.apply(g.as_slice()));
            let alpha = -g.dot(&dir) / dir.dot(&(&q * &dir));
            let s = &dir * alpha;
            x += &s;
            let g_new = &q * &x - &b;
            let z = &g_new - &g;
            state.update(s.as_slice(), z.as_slice());
            let h = DMatrix::from_row_slice(d, d, state.h());
            for _ in 0..5 {
                let v = DVector::from_vec(rand_vec(d, &mut rng));
                assert!(v.dot(&(&h * &v)) > 0.0);
            }
            g = g_new;
            iters += 1;
        }
        assert!(g.norm() < 1e-10, "d = {d}: |g| = {:e} after {iters}", g.norm());
    }
}

#[test]
fn qn_beats_gradient_descent_at_equal_iterations() {
    let full = Geometry::parallel(32, 90, 48);
    let truth = phantom::shepp_logan::<f64>(32);
    let (y, g) = tomo::subsample_views(&tomo::forward_project(&truth, &full).unwrap(), &full, 16).unwrap();
    let obj = Objective::new(&g, &y.data, 1.0, Regularizer::Tikhonov { mu: 0.05 }, 32, 32).unwrap();
    let x0 = tomo::fbp(&y, &g, Filter::RamLak).unwrap().data;
    let gd = gradient_descent(&obj, &x0, 1.0 / obj.lipschitz(), 30).unwrap();
    let qn = qn_reconstruct(&obj, &x0, 30, LineSearch::StrongWolfe).unwrap();
    assert!(qn.f < *gd.trace.last().unwrap(), "qn {} vs gd {}", qn.f, gd.trace.last().unwrap());
    assert!(qn.trace.iter().all(|r| r.symmetry_index < 1e-8));
    assert!(qn.trace.windows(2).all(|w| w[1].objective <= w[0].objective));

    let zero = qn_reconstruct(&obj, &x0, 0, LineSearch::StrongWolfe).unwrap();
    assert_eq!(zero.x, x0);
}

#[test]
fn qn_refuses_large_images() {
    let n = 129 * 129;
    let y = vec![0.0; n];
    let id = Identity(n);
    let obj = Objective::new(&id, &y, 1.0, Regularizer::None, 129, 129).unwrap();
    match qn_reconstruct(&obj, &y, 1, LineSearch::Fixed) {
        Err(e @ Error::MemoryGuard { .. }) => assert!(e.to_string().contains("qn-mixer")),
        other => panic!("expected memory guard, got {:?}", other.map(|r| r.f)),
    }
}

#[test]
fn line_searches_satisfy_their_conditions() {
    let (q, b) = quadratic(6, 9);
    let mut fg = |x: &[f64]| -> sparse_ct::Result<(f64, Vec<f64>)> {
        let xv = DVector::from_column_slice(x);
        let qx = &q * &xv;
        Ok((0.5 * xv.dot(&qx) - b.dot(&xv), (qx - &b).as_slice().to_vec()))
    };
    let x = vec![0.3; 6];
    let (f0, g0) = fg(&x).unwrap();
    let d: Vec<f64> = g0.iter().map(|v| -v).collect();
    let slope: f64 = g0.iter().zip(&d).map(|(a, b)| a * b).sum();
    for ls in [LineSearch::Armijo, LineSearch::StrongWolfe] {
        let st = ls.search(&mut fg, &x, f0, &g0, &d).unwrap();
        assert!(st.f <= f0 + C1 * st.alpha * slope, "{ls:?} sufficient decrease");
        if ls == LineSearch::StrongWolfe {
            let new_slope: f64 = st.g.iter().zip(&d).map(|(a, b)| a * b).sum();
            assert!(new_slope.abs() <= C2 * slope.abs(), "curvature condition");
        }
    }
    let fixed = LineSearch::Fixed.search(&mut fg, &x, f0, &g0, &d).unwrap();
    assert_eq!(fixed.alpha, 1.0);
    assert_eq!("wolfe".parse::<LineSearch>().unwrap(), LineSearch::StrongWolfe);
    assert!("newton".parse::<LineSearch>().is_err());
}

#[test]
fn trace_csv_has_symmetry_column() {
    let mut out = Vec::new();
    let row = TraceRow { iteration: 1, objective: 2.0, grad_norm: 0.5, step: 1.0, secant_residual: 0.0, symmetry_index: 0.0, frobenius_step: 0.1 };
    write_trace_csv(&mut out, &[row]).unwrap();
    let text = String::from_utf8(out).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.split(',').any(|c| c == "symmetry_index"), "{header}");
    assert_eq!(text.lines().count(), 2);
}
