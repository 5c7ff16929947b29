//! Generate the procedural gait datasets and print what is in them.
//!
//!     cargo run --release --example generate_dataset -- out/data
//!
//! Writes one `.smpd` file per preset: the 3-style corpus, the three-clip
//! walk-jog-run set, and a single reference clip.

use smp::env::dataset::{generate_gait_dataset, save_dataset, DataPreset, STYLES};
use smp::env::EnvParams;
use smp::rng::{stream, Domain};

fn main() -> smp::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/data".into());
    std::fs::create_dir_all(&out)?;
    let env = EnvParams::default();
    let seed = 17;

    for (name, preset) in [
        ("styles", DataPreset::parse("styles")?),
        ("walk-jog-run", DataPreset::parse("walk-jog-run")?),
        ("single-clip", DataPreset::parse("single-clip")?),
    ] {
        let mut rng = stream(seed, Domain::Data, 0);
        let dataset = generate_gait_dataset(&env, &preset, &mut rng);
        let path = std::path::Path::new(&out).join(format!("{name}.smpd"));
        save_dataset(&path, &dataset)?;
        println!(
            "{name}: {} clips, {} windows -> {}",
            dataset.clips.len(),
            dataset.windows.len(),
            path.display()
        );
        for clip in dataset.clips.iter().take(4) {
            println!(
                "  clip: style {} at {:.2} m/s for {:.1} s (turn {:+.2} rad/s)",
                STYLES[clip.style as usize].name,
                clip.speed,
                clip.duration,
                clip.turn_rate
            );
        }
    }
    Ok(())
}
