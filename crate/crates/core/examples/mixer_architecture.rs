// Parameter budget and tensor shapes of the Inception + MLP-Mixer gradient
// network at the full-size and desk configurations.
//
//     cargo run --release --example mixer_architecture

use ndauto::{Graph, Params, Tensor};
use sparse_ct::mixer::{init_mixer, inception, mixer_forward, patch_embed, MixerConfig};
use sparse_ct::nn::Binder;

/// Returns the desk-configuration output shape.
pub fn run_example() -> Result<Vec<usize>, Box<dyn std::error::Error>> {
    for (name, cfg) in [("full-size", MixerConfig::full_size()), ("desk", MixerConfig::desk())] {
        let c = cfg.param_counts();
        println!("{name}: {}x{} image, patch {}, dim {}", cfg.image_h, cfg.image_w, cfg.patch, cfg.dim);
        println!("  inception     {:>8} (+{} PReLU slopes)", c.inception, c.inception_prelu);
        println!("  patch embed   {:>8}", c.patch_embed);
        println!("  mixer layer   {:>8} x {}", c.mixer_layer, cfg.layers);
        println!("  patch expand  {:>8}", c.patch_expand);
        println!("  total         {:>8}", c.total);
    }

    let cfg = MixerConfig::desk();
    let mut params = Params::<f32>::new();
    init_mixer(&cfg, &mut params, 0)?;
    let mut g = Graph::new();
    let mut b = Binder::new(&params);
    let x = g.input(Tensor::full(&[1, 1, cfg.image_h, cfg.image_w], 0.5f32));
    let f = inception(&mut g, &mut b, x)?;
    let e = patch_embed(&mut g, &mut b, f, &cfg)?;
    println!("desk features {:?}, embeddings {:?}", g.shape(f), g.shape(e));
    let mut g = Graph::new();
    let mut b = Binder::new(&params);
    let x = g.input(Tensor::full(&[1, 1, cfg.image_h, cfg.image_w], 0.5f32));
    let out = mixer_forward(&mut g, &mut b, x, &cfg)?;
    println!("desk output {:?}", g.shape(out));
    Ok(g.shape(out).to_vec())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
