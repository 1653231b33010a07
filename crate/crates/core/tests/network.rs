use ndauto::{grad_check_params, Graph, Params, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_ct::codec::{decode, encode, init_codec, CodecConfig};
use sparse_ct::mixer::{init_mixer, inception, mixer_forward, mixer_layer, patch_embed, MixerConfig};
use sparse_ct::nn::Binder;
use sparse_ct::unroll::{lambda_name, UnrollConfig};
use sparse_ct::{InitMode, Problem, PseudoInverse, UnrolledNet, UpdateRule};
use tomo::{Filter, Geometry};

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn mixer_params(cfg: &MixerConfig, seed: u64) -> Params<f64> {
    let mut p = Params::new();
    init_mixer(cfg, &mut p, seed).unwrap();
    p
}

fn zero_prefix(p: &mut Params<f64>, prefix: &str) {
    let ids: Vec<_> = p.ids().filter(|&id| p.name(id).starts_with(prefix)).collect();
    for id in ids {
        p.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
}

#[test]
fn desk_shapes() {
    let cfg = MixerConfig::desk();
    let p = mixer_params(&cfg, 0);
    let mut g = Graph::new();
    let mut b = Binder::new(&p);
    let x = g.input(rand_tensor(&[1, 1, 64, 64], 1));
    let f = inception(&mut g, &mut b, x).unwrap();
    assert_eq!(g.shape(f), &[1, 24, 64, 64]);
    let e = patch_embed(&mut g, &mut b, f, &cfg).unwrap();
    assert_eq!(g.shape(e), &[1, 16, 16, 24]);
    let e2 = mixer_layer(&mut g, &mut b, e, 0).unwrap();
    assert_eq!(g.shape(e2), g.shape(e));
    let out = mixer_forward(&mut g, &mut b, x, &cfg).unwrap();
    assert_eq!(g.shape(out), &[1, 1, 64, 64]);
}

#[test]
fn output_shape_matches_input_for_rectangular_images() {
    let cfg = MixerConfig::tiny(16).with_image(8, 20);
    let p = mixer_params(&cfg, 0);
    let mut g = Graph::new();
    let mut b = Binder::new(&p);
    let x = g.input(rand_tensor(&[1, 1, 8, 20], 2));
    let out = mixer_forward(&mut g, &mut b, x, &cfg).unwrap();
    assert_eq!(g.shape(out), &[1, 1, 8, 20]);
    assert!(MixerConfig::tiny(18).validate().is_err());
    let mut bad = MixerConfig::desk();
    bad.branches = [4, 8, 8, 8];
    assert!(bad.validate().is_err());
}

#[test]
fn inception_maps_zero_to_zero() {
    let p = mixer_params(&MixerConfig::desk(), 3);
    let mut g = Graph::new();
    let mut b = Binder::new(&p);
    let x = g.input(Tensor::zeros(&[1, 1, 64, 64]));
    let f = inception(&mut g, &mut b, x).unwrap();
    assert!(g.value(f).data().iter().all(|&v| v == 0.0));
    let two = g.input(Tensor::zeros(&[1, 2, 8, 8]));
    assert!(inception(&mut g, &mut b, two).is_err());
}

#[test]
fn zeroed_mixer_layer_is_identity() {
    let cfg = MixerConfig::tiny(16);
    let mut p = mixer_params(&cfg, 4);
    zero_prefix(&mut p, "mixer.layer0");
    let mut g = Graph::new();
    let mut b = Binder::new(&p);
    let e0 = rand_tensor(&[1, 4, 4, 12], 5);
    let e = g.input(e0.clone());
    let out = mixer_layer(&mut g, &mut b, e, 0).unwrap();
    assert_eq!(g.value(out).data(), e0.data());
}

/// Permutes the height-token axis of a `[1, h, w, c]` tensor.
fn permute_rows(t: &Tensor<f64>, perm: &[usize]) -> Tensor<f64> {
    let s = t.shape().to_vec();
    let row = s[2] * s[3];
    let mut out = vec![0.0; t.len()];
    for (dst, &src) in perm.iter().enumerate() {
        out[dst * row..(dst + 1) * row].copy_from_slice(&t.data()[src * row..(src + 1) * row]);
    }
    Tensor::new(&s, out).unwrap()
}

fn layer_out(p: &Params<f64>, e: Tensor<f64>) -> Tensor<f64> {
    let mut g = Graph::new();
    let mut b = Binder::new(p);
    let v = g.input(e);
    let out = mixer_layer(&mut g, &mut b, v, 0).unwrap();
    g.value(out).clone()
}

#[test]
fn height_permutation_commutes_without_height_mixing() {
    let cfg = MixerConfig::tiny(24);
    let e = rand_tensor(&[1, 6, 6, 12], 6);
    let perm = [3, 0, 5, 1, 4, 2];
    let mut inv = [0; 6];
    perm.iter().enumerate().for_each(|(i, &p)| inv[p] = i);

    // width and channel MLPs zeroed
    let mut p = mixer_params(&cfg, 7);
    zero_prefix(&mut p, "mixer.layer0.width");
    zero_prefix(&mut p, "mixer.layer0.channel");
    let back = permute_rows(&layer_out(&p, permute_rows(&e, &perm)), &inv);
    assert_eq!(back.data(), layer_out(&p, e.clone()).data());

    // height MLP zeroed, width and channel MLPs random: every remaining
    // operation acts within one height row
    let mut p = mixer_params(&cfg, 8);
    zero_prefix(&mut p, "mixer.layer0.height");
    let back = permute_rows(&layer_out(&p, permute_rows(&e, &perm)), &inv);
    assert_eq!(back.data(), layer_out(&p, e.clone()).data());

    // with height mixing active the layer is not equivariant
    let p = mixer_params(&cfg, 9);
    let back = permute_rows(&layer_out(&p, permute_rows(&e, &perm)), &inv);
    assert_ne!(back.data(), layer_out(&p, e).data());
}

#[test]
fn parameter_counts_match_initialised_tensors() {
    for cfg in [MixerConfig::full_size(), MixerConfig::desk(), MixerConfig::tiny(16)] {
        let p = mixer_params(&cfg, 0);
        let c = cfg.param_counts();
        let prelu: usize = p.iter().filter(|(n, _)| n.starts_with("mixer.inception") && n.ends_with("act")).map(|(_, t)| t.len()).sum();
        assert_eq!(p.count("mixer.inception") - prelu, c.inception);
        assert_eq!(prelu, c.inception_prelu);
        assert_eq!(p.count("mixer.embed"), c.patch_embed);
        assert_eq!(p.count("mixer.layer0"), c.mixer_layer);
        assert_eq!(p.count("mixer.expand"), c.patch_expand);
        assert_eq!(p.count("mixer."), c.total);
    }
    // inception at the full-size configuration, hand-counted from the layer table
    let c = MixerConfig::full_size().param_counts();
    assert_eq!(c.inception, (16 + 16) + (16 + 16) + (32 * 16 * 9 + 32) + (16 + 16) + (32 * 16 * 25 + 32) + (16 + 16));
}

#[test]
fn init_is_deterministic_and_has_stated_statistics() {
    let cfg = MixerConfig::desk();
    let a = mixer_params(&cfg, 11);
    assert!(a.same_values(&mixer_params(&cfg, 11)));
    assert!(!a.same_values(&mixer_params(&cfg, 12)));
    let mlp: Vec<f64> = a
        .iter()
        .filter(|(n, _)| (n.contains(".fc1.") || n.contains(".fc2.") || n.contains("expand.linear")) && n.ends_with("weight"))
        .flat_map(|(_, t)| t.data().to_vec())
        .collect();
    assert!(mlp.len() >= 10_000, "{} samples", mlp.len());
    let mean = mlp.iter().sum::<f64>() / mlp.len() as f64;
    let std = (mlp.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / mlp.len() as f64).sqrt();
    assert!((0.017..=0.023).contains(&std), "std {std}");
    assert!(mlp.iter().all(|v| v.abs() <= 0.04));
    assert!(a.iter().filter(|(n, _)| n.ends_with("bias")).all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));

    let net = UnrolledNet::desk();
    let p = net.init_params::<f32>(0, InitMode::Standard).unwrap();
    for t in 0..net.unroll.iterations {
        assert_eq!(p.by_name(&lambda_name(t)).unwrap().data(), &[0.0]);
    }
}

#[test]
fn mixer_gradient_check_tiny() {
    let cfg = MixerConfig::tiny(16);
    let p = mixer_params(&cfg, 13);
    let x = rand_tensor(&[1, 1, 16, 16], 14);
    let target = rand_tensor(&[1, 1, 16, 16], 15);
    let rep = grad_check_params(
        |g, p| {
            let mut b = Binder::new(p);
            let xv = g.constant(x.clone());
            let out = mixer_forward(g, &mut b, xv, &cfg).map_err(|e| ndauto::TensorError::Checkpoint(e.to_string()))?;
            g.mse(out, &target)
        },
        &p,
        1e-6,
        1e-6,
    )
    .unwrap();
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn codec_shapes_and_zero_response() {
    let cfg = CodecConfig::new(2);
    let mut p = Params::<f64>::new();
    init_codec(&cfg, &mut p, 0).unwrap();
    let mut g = Graph::new();
    let mut b = Binder::new(&p);
    let x = g.input(rand_tensor(&[1, 1, 64, 64], 1));
    let r = encode(&mut g, &mut b, x, &cfg).unwrap();
    assert_eq!(g.shape(r), &[1, 1, 16, 16]);
    let d = decode(&mut g, &mut b, r, &cfg).unwrap();
    assert_eq!(g.shape(d), &[1, 1, 64, 64]);
    let z = g.input(Tensor::zeros(&[1, 1, 64, 64]));
    let rz = encode(&mut g, &mut b, z, &cfg).unwrap();
    assert!(g.value(rz).data().iter().all(|&v| v == 0.0));
    let dz = decode(&mut g, &mut b, rz, &cfg).unwrap();
    assert!(g.value(dz).data().iter().all(|&v| v == 0.0));
    let odd = g.input(Tensor::zeros(&[1, 1, 30, 30]));
    assert!(encode(&mut g, &mut b, odd, &cfg).is_err());

    assert_eq!(cfg.latent_dims(256, 256).unwrap(), (64, 64));
    assert_eq!(cfg.latent_dims(64, 64).unwrap(), (16, 16));
    for (k, side) in [(2, 64usize), (3, 32), (4, 16), (5, 8)] {
        assert_eq!(CodecConfig::new(k).hessian_entries(256, 256).unwrap(), side.pow(4));
    }
}

#[test]
fn codec_gradient_check() {
    let cfg = CodecConfig { stacks: 2, channels: 4 };
    let mut p = Params::<f64>::new();
    init_codec(&cfg, &mut p, 21).unwrap();
    // nonzero biases so every term of the instance norms is exercised
    let ids: Vec<_> = p.ids().filter(|&id| p.name(id).ends_with("bias") || p.name(id).ends_with("beta")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for id in ids {
        p.get_mut(id).data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
    }
    let x = rand_tensor(&[1, 1, 16, 16], 23);
    let target = rand_tensor(&[1, 1, 16, 16], 24);
    let rep = grad_check_params(
        |g, p| {
            let mut b = Binder::new(p);
            let xv = g.constant(x.clone());
            let wrap = |e: sparse_ct::Error| ndauto::TensorError::Checkpoint(e.to_string());
            let r = encode(g, &mut b, xv, &cfg).map_err(wrap)?;
            let out = decode(g, &mut b, r, &cfg).map_err(wrap)?;
            g.mse(out, &target)
        },
        &p,
        1e-6,
        1e-6,
    )
    .unwrap();
    assert!(rep.passed, "{rep:?}");
}

fn small_net(size: usize, iterations: usize) -> UnrolledNet {
    UnrolledNet {
        mixer: MixerConfig::tiny(size),
        codec: CodecConfig { stacks: 2, channels: 4 },
        unroll: UnrollConfig { iterations, ..UnrollConfig::default() },
    }
}

fn problem<T: tomo::Scalar + ndauto::Real>(size: usize, views: usize, pinv: PseudoInverse) -> (Problem<T>, Vec<f64>) {
    let full = Geometry::parallel(size, 4 * views, size * 3 / 2);
    let truth = tomo::phantom::random_ellipses::<f64>(size, 3);
    let y = tomo::forward_project(&truth, &full).unwrap();
    let (y, g) = tomo::subsample_views(&y, &full, views).unwrap();
    (Problem::new(&y.cast::<T>(), &g, pinv).unwrap(), truth.data)
}

#[test]
fn cold_start_returns_fbp_exactly() {
    for t in [1, 6] {
        let net = UnrolledNet { unroll: UnrollConfig { iterations: t, ..UnrollConfig::default() }, ..UnrolledNet::desk() };
        let p64 = net.init_params::<f64>(5, InitMode::ColdStart).unwrap();
        let (pb, _) = problem::<f64>(64, 16, net.unroll.pseudo_inverse);
        let out = net.reconstruct(&p64, &pb).unwrap();
        assert_eq!(out.x, pb.x0, "T = {t}");
        let p32 = net.init_params::<f32>(5, InitMode::ColdStart).unwrap();
        let (pb, _) = problem::<f32>(64, 16, net.unroll.pseudo_inverse);
        assert_eq!(net.reconstruct(&p32, &pb).unwrap().x, pb.x0);
    }
}

#[test]
fn zero_decoder_head_starts_at_x0_and_trains_every_block() {
    let net = small_net(32, 3);
    let mut p = net.init_params::<f64>(6, InitMode::ZeroDecoderHead).unwrap();
    let (pb, truth) = problem::<f64>(32, 8, net.unroll.pseudo_inverse);
    assert_eq!(net.reconstruct(&p, &pb).unwrap().x, pb.x0);
    p.zero_grad();
    let loss = sparse_ct::train::loss_and_grad(&net, &mut p, &pb, &truth).unwrap();
    assert!(loss > 0.0);
    fn nonzero(p: &Params<f64>, prefix: &str) -> bool {
        p.iter().filter(|(n, _)| n.starts_with(prefix)).any(|(_, t)| t.grad().is_some_and(|g| g.iter().any(|&v| v != 0.0)))
    }
    // the zero head blocks everything upstream on the first step
    assert!(nonzero(&p, "codec.dec.out"), "decoder head");
    assert!(!nonzero(&p, "mixer."));
    let mut opt = sparse_ct::train::AdamW::new(0.0);
    opt.step(&mut p, 1e-3);
    p.zero_grad();
    sparse_ct::train::loss_and_grad(&net, &mut p, &pb, &truth).unwrap();
    assert!(nonzero(&p, "mixer."), "mixer");
    assert!(nonzero(&p, "codec.enc"), "encoder");
    assert!(nonzero(&p, "unroll.lambda"), "lambda");
}

#[test]
fn latent_updates_satisfy_secant_and_symmetry() {
    let net = UnrolledNet { unroll: UnrollConfig { iterations: 6, ..UnrollConfig::default() }, ..UnrolledNet::desk() };
    let mut p = net.init_params::<f64>(7, InitMode::Standard).unwrap();
    for t in 0..6 {
        let id = p.id(&lambda_name(t)).unwrap();
        p.get_mut(id).data_mut()[0] = 0.5;
    }
    let (pb, _) = problem::<f64>(64, 16, net.unroll.pseudo_inverse);
    let out = net.reconstruct(&p, &pb).unwrap();
    assert_eq!(out.records.len(), 6);
    assert_eq!(out.intermediates.len(), 6);
    assert!(out.records[5].update.is_none(), "no update on the last iteration");
    let mut applied = 0;
    for r in &out.records {
        assert!(r.diagnostics.symmetry_index < 1e-8);
        assert!(r.diagnostics.frobenius_step.is_finite());
        if let Some(sparse_ct::solvers::UpdateOutcome::Applied { .. }) = r.update {
            applied += 1;
            assert!(r.diagnostics.secant_residual < 1e-5, "{:?}", r.diagnostics);
        }
    }
    assert!(applied > 0);
    assert_eq!(out.state.unwrap().dim(), 256);
}

#[test]
fn learned_gradient_is_linear_in_lambda() {
    let net = small_net(32, 2);
    let mut p = net.init_params::<f64>(8, InitMode::Standard).unwrap();
    let id = p.id(&lambda_name(1)).unwrap();
    p.get_mut(id).data_mut()[0] = 0.7;
    for other in p.ids().filter(|&i| i != id).collect::<Vec<_>>() {
        p.get_mut(other).set_requires_grad(false);
    }
    let (pb, _) = problem::<f64>(32, 8, net.unroll.pseudo_inverse);
    let x = Tensor::new(&[1, 1, 32, 32], pb.x0.iter().map(|v| v * 0.9).collect()).unwrap();
    let rep = grad_check_params(
        |g, p| {
            let mut b = Binder::new(p);
            let xv = g.constant(x.clone());
            let yv = g.constant(Tensor::new(&[pb.y.len()], pb.y.clone())?);
            let gr = net.learned_gradient(g, &mut b, xv, yv, 1, &pb).map_err(|e| ndauto::TensorError::Checkpoint(e.to_string()))?;
            g.sum_of_squares(gr)
        },
        &p,
        1e-6,
        1e-5,
    )
    .unwrap();
    assert!(rep.passed && rep.checked == 1, "{rep:?}");

    // lambda = 1, G = 0 and a consistent x give a zero gradient
    let mut q = net.init_params::<f64>(8, InitMode::ColdStart).unwrap();
    let id = q.id(&lambda_name(0)).unwrap();
    q.get_mut(id).data_mut()[0] = 1.0;
    let geo = Geometry::parallel(32, 8, 48);
    let truth = tomo::phantom::shepp_logan::<f64>(32);
    let y = tomo::forward_project(&truth, &geo).unwrap();
    let pb = Problem::new(&y, &geo, PseudoInverse::Fbp(Filter::RamLak)).unwrap();
    let mut g = Graph::new();
    let mut b = Binder::new(&q);
    let xv = g.constant(Tensor::new(&[1, 1, 32, 32], truth.data.clone()).unwrap());
    let yv = g.constant(Tensor::new(&[pb.y.len()], pb.y.clone()).unwrap());
    let gr = net.learned_gradient(&mut g, &mut b, xv, yv, 0, &pb).unwrap();
    assert!(g.value(gr).data().iter().all(|&v| v == 0.0));
}

#[test]
fn gradient_step_rule_and_adjoint_pseudo_inverse() {
    let mut net = small_net(32, 2);
    net.unroll.rule = UpdateRule::GradientStep;
    net.unroll.pseudo_inverse = PseudoInverse::Adjoint;
    let p = net.init_params::<f64>(9, InitMode::ColdStart).unwrap();
    assert_eq!(p.count("codec."), 0);
    let (pb, _) = problem::<f64>(32, 8, net.unroll.pseudo_inverse);
    let out = net.reconstruct(&p, &pb).unwrap();
    assert_eq!(out.x, pb.x0);
    assert!(out.state.is_none());
}

#[test]
fn mismatched_problem_is_rejected() {
    let net = UnrolledNet::desk();
    let p = net.init_params::<f64>(0, InitMode::ColdStart).unwrap();
    let (pb, _) = problem::<f64>(32, 8, net.unroll.pseudo_inverse);
    assert!(matches!(net.reconstruct(&p, &pb), Err(sparse_ct::Error::Shape(_))));
    let bad = UnrolledNet { unroll: UnrollConfig { iterations: 0, ..UnrollConfig::default() }, ..UnrolledNet::desk() };
    assert!(bad.validate().is_err());
}
