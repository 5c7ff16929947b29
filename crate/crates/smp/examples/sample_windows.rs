//! Sample motion windows from a trained prior, unconditionally and with
//! classifier-free guidance toward each style, then classify every sample.
//!
//!     cargo run --release --example sample_windows -- out/prior.smpl

use smp::diffusion::{sample_reverse, DenoiserModel, EpsPredictor, StyleLabel};
use smp::env::dataset::STYLES;
use smp::eval::classify_window;
use smp::rng::{stream, Domain};

fn main() -> smp::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "out/prior.smpl".into());
    let model = DenoiserModel::load(std::path::Path::new(&path))?;
    let mut rng = stream(23, Domain::Sampling, 0);
    let dim = model.window_dim();
    let mut raw = vec![0.0; dim];
    let fps = 30.0;

    println!("unconditional samples:");
    for k in 0..8 {
        let z = sample_reverse(&model, StyleLabel::Null, 1.0, &mut rng)?;
        model.denormalize(&z, &mut raw);
        let v = classify_window(&raw, fps);
        println!(
            "  {k}: {} (limb1 A={:.2} off={:+.2} f={:.2} Hz)",
            STYLES[v.style].name,
            v.limbs[0].amplitude,
            v.limbs[0].offset,
            v.limbs[0].frequency
        );
    }

    for (s, name) in model.style_names.iter().enumerate() {
        let mut hits = 0;
        let trials = 32;
        for _ in 0..trials {
            let z = sample_reverse(&model, StyleLabel::Id(s), 1.0, &mut rng)?;
            model.denormalize(&z, &mut raw);
            if classify_window(&raw, fps).style == s {
                hits += 1;
            }
        }
        println!("guided toward {name:<10}: {hits}/{trials} classified back to it");
    }
    Ok(())
}
