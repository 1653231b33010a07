// Flat key = value run configuration: defaults, overrides, and the objects
// built from it.
//
//     cargo run --release --example run_config

use sparse_ct::config::RunConfig;

/// Returns the rendered configuration after overrides.
pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::parse("# sweep\nseed = 11\ngeometry.views = 32\n")?;
    cfg.apply_overrides(["unroll.iterations=4", "codec.stacks=3"])?;
    let net = cfg.net()?;
    let (lh, lw) = net.latent_dims()?;
    let scanner = cfg.scanner()?;
    println!("{} measured of {} views, {} detectors", scanner.n_views, scanner.full.n_views(), scanner.full.n_det);
    println!("T = {}, latent {lh}x{lw}", net.unroll.iterations);
    let train = cfg.train()?;
    println!("lr {} (x{} from epoch {}), weight decay {}", train.lr, train.lr_decay_factor, train.lr_decay_epoch, train.weight_decay);
    let text = cfg.render();
    // the rendered file parses back to the same settings
    assert_eq!(RunConfig::parse(&text)?.render(), text);
    Ok(text)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
