// A few epochs of training on procedural phantoms with a small network,
// then held-out scoring against FBP.
//
//     cargo run --release --example train_tiny

use sparse_ct::codec::CodecConfig;
use sparse_ct::mixer::MixerConfig;
use sparse_ct::train::{evaluate_net, evaluate_with, phantom_set, train_unrolled, Scanner, TrainConfig};
use sparse_ct::unroll::UnrollConfig;
use sparse_ct::{InitMode, UnrolledNet};
use tomo::{fbp, Filter, Geometry, NoiseConfig};

/// Returns the per-step losses.
pub fn run_example() -> Result<Vec<f64>, Box<dyn std::error::Error>> {
    let net = UnrolledNet {
        mixer: MixerConfig::tiny(32),
        codec: CodecConfig { stacks: 2, channels: 8 },
        unroll: UnrollConfig { iterations: 3, ..UnrollConfig::default() },
    };
    let scanner = Scanner { full: Geometry::parallel(32, 90, 48), n_views: 10, noise: NoiseConfig::n1() };
    let train = phantom_set(6, 32, 0, "train");
    let test = phantom_set(3, 32, 0, "test");
    let cfg = TrainConfig { epochs: 3, lr: 1e-3, lr_decay_epoch: 2, n_views: 10, ..TrainConfig::desk() };

    let params = net.init_params::<f32>(1, InitMode::ZeroDecoderHead)?;
    let out = train_unrolled(&net, params, &train, &scanner, &cfg, |r| {
        println!("step {:2} epoch {} lr {:.0e} loss {:.5}", r.step, r.epoch, r.lr, r.loss)
    })?;
    let base = evaluate_with(&test, &scanner, 9, |y, g| Ok(fbp(y, g, Filter::RamLak)?.data))?;
    let learned = evaluate_net(&net, &out.params, &test, &scanner, 9)?;
    println!("held-out PSNR: FBP {:.2} dB, network {:.2} dB", base.psnr().0, learned.psnr().0);
    Ok(out.losses.iter().map(|r| r.loss).collect())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
