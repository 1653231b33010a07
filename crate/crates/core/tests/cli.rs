use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tomo::io::{load_image, load_sinogram};
use tomo::Image;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sparse-ct"))
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn phantoms_are_deterministic_and_in_range() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (p(d.path(), "a.tomo"), p(d.path(), "b.tomo"));
    run(&["phantom", "--kind", "random-ellipses", "--size", "48", "--seed", "5", "--out", &a]);
    run(&["phantom", "--kind", "random-ellipses", "--size", "48", "--seed", "5", "--out", &b]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    run(&["phantom", "--kind", "random-ellipses", "--size", "48", "--seed", "6", "--out", &b]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let sl = p(d.path(), "sl.tomo");
    run(&["phantom", "--size", "64", "--out", &sl, "--pgm", &p(d.path(), "sl.pgm")]);
    let img: Image<f64> = load_image(&sl).unwrap();
    assert_eq!((img.h, img.w), (64, 64));
    assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
    // additive ellipses on a 2x2 field: mean = sum(v * pi * a * b) / 4
    let analytic: f64 = tomo::phantom::shepp_logan_ellipses()
        .iter()
        .map(|e| e.intensity * std::f64::consts::PI * e.a * e.b)
        .sum::<f64>()
        / 4.0;
    let mean = img.data.iter().sum::<f64>() / img.data.len() as f64;
    assert!((mean - analytic).abs() < 0.02 * analytic, "{mean} vs {analytic}");
    assert!(fs::read(p(d.path(), "sl.pgm")).unwrap().starts_with(b"P5"));
    assert!(Path::new(&format!("{sl}.cfg")).exists());
}

#[test]
fn project_noise_fbp_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let img = p(d.path(), "img.tomo");
    run(&["phantom", "--size", "64", "--out", &img]);
    let sino = p(d.path(), "y.tomo");
    run(&["project", "--input", &img, "--out", &sino, "--views-full", "512", "--views", "32"]);
    let y: tomo::Sinogram<f64> = load_sinogram(&sino).unwrap();
    assert_eq!(y.n_v, 32);

    // noiseless settings leave the sinogram untouched
    let clean = p(d.path(), "clean.tomo");
    run(&["noise", "--input", &sino, "--out", &clean, "--poisson", "0", "--gauss-frac", "0"]);
    assert_eq!(fs::read(&sino).unwrap(), fs::read(&clean).unwrap());
    let noisy = p(d.path(), "noisy.tomo");
    run(&["noise", "--input", &sino, "--out", &noisy, "--seed", "3"]);
    assert_ne!(fs::read(&sino).unwrap(), fs::read(&noisy).unwrap());

    // dense round trip
    let dense = p(d.path(), "dense.tomo");
    run(&["project", "--input", &img, "--out", &dense, "--views", "180"]);
    let rec = p(d.path(), "rec.tomo");
    run(&["fbp", "--input", &dense, "--out", &rec]);
    let x: Image<f64> = load_image(&rec).unwrap();
    let truth: Image<f64> = load_image(&img).unwrap();
    let psnr = sparse_ct::metrics::psnr(&x.data, &truth.data, 1.0).unwrap();
    assert!(psnr >= 25.0, "{psnr}");

    // replaying the emitted config reproduces the output bytes
    let again = p(d.path(), "again.tomo");
    run(&["fbp", "--input", &dense, "--out", &again, "--config", &format!("{rec}.cfg")]);
    assert_eq!(fs::read(&rec).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn reconstruct_methods() {
    let d = tempfile::tempdir().unwrap();
    let img = p(d.path(), "img.tomo");
    run(&["phantom", "--size", "32", "--out", &img]);
    let sino = p(d.path(), "y.tomo");
    let geo = ["--size", "32", "--detectors", "48", "--views-full", "90"];
    run(&[&["project", "--input", &img, "--out", &sino, "--views", "10"][..], &geo].concat());
    let fbp = p(d.path(), "fbp.tomo");
    run(&[&["fbp", "--input", &sino, "--out", &fbp][..], &geo].concat());

    let gd_trace = p(d.path(), "gd.csv");
    let args = ["reconstruct", "--method", "gd", "--input", &sino, "--out", &p(d.path(), "gd.tomo"), "--trace", &gd_trace];
    run(&[&args[..], &geo, &["--iters", "15"]].concat());
    let j: Vec<f64> = fs::read_to_string(&gd_trace).unwrap().lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(j.len(), 16);
    assert!(j.windows(2).all(|w| w[1] <= w[0]), "{j:?}");

    let qn_trace = p(d.path(), "qn.csv");
    let args = ["reconstruct", "--method", "qn", "--input", &sino, "--out", &p(d.path(), "qn.tomo"), "--trace", &qn_trace];
    run(&[&args[..], &geo, &["--iters", "5"]].concat());
    assert!(fs::read_to_string(&qn_trace).unwrap().lines().next().unwrap().contains("symmetry_index"));

    // one-iteration cold-start network equals FBP byte for byte
    let wdir = p(d.path(), "w");
    let net = ["--set", "unroll.iterations=1", "--set", "unroll.init=cold-start"];
    run(&[&["train", "--out-dir", &wdir, "--init-only"][..], &geo, &net].concat());
    let mix = p(d.path(), "mix.tomo");
    let inter = p(d.path(), "inter");
    let args = ["reconstruct", "--method", "qn-mixer", "--input", &sino, "--out", &mix, "--weights", &p(Path::new(&wdir), "weights.ckpt"), "--intermediates", &inter, "--trace", &p(d.path(), "mix.csv"), "--reference", &img];
    run(&[&args[..], &geo, &net].concat());
    assert_eq!(fs::read(&fbp).unwrap(), fs::read(&mix).unwrap());
    assert!(Path::new(&inter).join("iter_001.tomo").exists());

    let err = bin().args([&["reconstruct", "--method", "qn-mixer", "--input", &sino, "--out", &mix][..], &geo].concat()).output().unwrap();
    assert!(!err.status.success());
    let msg = String::from_utf8(err.stderr).unwrap();
    assert_eq!(msg.lines().count(), 1);
    assert!(msg.starts_with("error kind=argument") && msg.contains("--weights"), "{msg}");
}

#[test]
fn eval_on_identical_dirs_scores_one() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    for (i, seed) in [1, 2, 3].iter().enumerate() {
        let name = format!("img{i}.tomo");
        run(&["phantom", "--kind", "random-ellipses", "--size", "32", "--seed", &seed.to_string(), "--out", &p(&a, &name)]);
        fs::copy(a.join(&name), b.join(&name)).unwrap();
    }
    let csv = p(d.path(), "m.csv");
    run(&["eval", "--recon-dir", &p(&a, ""), "--ref-dir", &p(&b, ""), "--out", &csv]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "image_id,psnr_db,ssim,ms_ssim");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f[1], "inf");
        assert_eq!(f[2].parse::<f64>().unwrap(), 1.0);
    }
}

#[test]
fn nps_from_repeated_scans() {
    let d = tempfile::tempdir().unwrap();
    let img = p(d.path(), "img.tomo");
    run(&["phantom", "--size", "64", "--out", &img]);
    let sino = p(d.path(), "y.tomo");
    run(&["project", "--input", &img, "--out", &sino, "--views", "180"]);
    let mut recs = Vec::new();
    for s in 0..3 {
        let (n, r) = (p(d.path(), &format!("n{s}.tomo")), p(d.path(), &format!("r{s}.tomo")));
        run(&["noise", "--input", &sino, "--out", &n, "--seed", &s.to_string()]);
        run(&["fbp", "--input", &n, "--out", &r]);
        recs.push(r);
    }
    let csv = p(d.path(), "nps.csv");
    let mut args = vec!["nps", "--out", &csv, "--inputs"];
    args.extend(recs.iter().map(String::as_str));
    run(&args);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("freq_cycles_per_px,nps_hu2px2"));
    let vals: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(vals[1..].iter().all(|&v| v > 0.0));
    let fails = bin().args(["nps", "--out", &csv, "--inputs", &recs[0]]).output().unwrap();
    assert!(!fails.status.success());
}

#[test]
fn ood_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let img = p(d.path(), "img.tomo");
    run(&["phantom", "--size", "64", "--out", &img]);
    let (o1, o2) = (p(d.path(), "o1"), p(d.path(), "o2"));
    run(&["ood", "--input", &img, "--out-dir", &o1, "--seed", "9"]);
    run(&["ood", "--input", &img, "--out-dir", &o2, "--seed", "9"]);
    for f in ["mask.pgm", "truth.tomo", "recon.tomo", "ood.csv"] {
        assert_eq!(fs::read(Path::new(&o1).join(f)).unwrap(), fs::read(Path::new(&o2).join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(Path::new(&o1).join("ood.csv")).unwrap();
    assert!(csv.starts_with("region,psnr_db,ssim,r0,r1,c0,c1\nfull,"));
    assert!(csv.contains("\ncrop,"));
}

#[test]
fn train_writes_artifacts() {
    let d = tempfile::tempdir().unwrap();
    let out = p(d.path(), "run");
    let args = [
        "train", "--out-dir", &out, "--size", "32", "--detectors", "48", "--views-full", "60", "--views", "8",
        "--set", "train.images=2", "--set", "train.epochs=2", "--set", "unroll.iterations=2",
        "--set", "mixer.dim=12", "--set", "mixer.branches=2,4,4,2", "--set", "codec.channels=4",
    ];
    run(&args);
    let dir = Path::new(&out);
    for f in ["epoch_0000.ckpt", "epoch_0001.ckpt", "loss.csv", "weights.ckpt", "run.cfg"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_to_string(dir.join("loss.csv")).unwrap().lines().count(), 5);
    // the saved config alone reproduces the weights
    let again = p(d.path(), "again");
    run(&["train", "--out-dir", &again, "--config", &p(dir, "run.cfg")]);
    assert_eq!(fs::read(dir.join("weights.ckpt")).unwrap(), fs::read(Path::new(&again).join("weights.ckpt")).unwrap());
}

#[test]
fn errors_are_one_line_with_nonzero_exit() {
    let d = tempfile::tempdir().unwrap();
    let missing = p(d.path(), "nope.tomo");
    let out = bin().args(["fbp", "--input", &missing, "--out", &p(d.path(), "x.tomo")]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8(out.stderr).unwrap();
    assert_eq!(msg.lines().count(), 1);
    assert!(msg.starts_with("error kind="));

    let out = bin().args(["phantom", "--out", &p(d.path(), "x.tomo"), "--set", "no.such.key=1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error kind=config"));

    let out = bin().args(["reconstruct", "--method", "sart"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8(out.stderr).unwrap();
    assert_eq!(msg.lines().count(), 1);
    assert!(msg.starts_with("error kind=usage"));
}

#[test]
fn help_documents_flags() {
    let top = String::from_utf8(run(&["--help"]).stdout).unwrap();
    for sub in ["phantom", "project", "fbp", "noise", "reconstruct", "train", "eval", "nps", "ood", "config"] {
        assert!(top.contains(sub), "{sub}");
        let help = String::from_utf8(run(&[sub, "--help"]).stdout).unwrap();
        assert!(help.contains("--seed") && help.contains("--set"), "{sub}");
    }
    let rec = String::from_utf8(run(&["reconstruct", "--help"]).stdout).unwrap();
    assert!(rec.contains("(count)") && rec.contains("--weights"));
    let schema = String::from_utf8(run(&["config"]).stdout).unwrap();
    assert!(schema.contains("unroll.iterations = 6"));
}
