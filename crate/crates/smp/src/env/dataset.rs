//! Procedural reference gait data.
//!
//! Clips are kinematic: the root translates at a fixed speed (optionally
//! with a gentle constant turn rate) while the limbs follow
//! `q_k(t) = A * sin(2*pi*f(v)*t + phi_k) + offset` with stride frequency
//! `f(v) = 0.6 + 0.35 * v` Hz. Three styles are defined: `neutral` (medium
//! swing), `highknees` (large swing, raised offset), and `zombie` (limbs
//! held rigid at pi/4). Windows of consecutive feature frames are the
//! training samples for the diffusion prior.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use super::features::{extract_features, FEATURE_DIM, WINDOW_FRAMES};
use super::{heading_dir, wrap_angle, EnvParams, EnvState};
use crate::error::{Result, SmpError};
use crate::wire;

/// Analytic gait parameters per style.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StyleParams {
    pub name: &'static str,
    pub amplitude: f64,
    pub offset: f64,
}

pub const STYLES: [StyleParams; 3] = [
    StyleParams {
        name: "neutral",
        amplitude: 0.35,
        offset: 0.0,
    },
    StyleParams {
        name: "highknees",
        amplitude: 0.8,
        offset: 0.25,
    },
    StyleParams {
        name: "zombie",
        amplitude: 0.0,
        offset: std::f64::consts::FRAC_PI_4,
    },
];

pub const STYLE_NEUTRAL: usize = 0;
pub const STYLE_HIGHKNEES: usize = 1;
pub const STYLE_ZOMBIE: usize = 2;

pub fn style_index(name: &str) -> Result<usize> {
    STYLES
        .iter()
        .position(|s| s.name == name)
        .ok_or_else(|| SmpError::Config(format!("unknown style '{name}'")))
}

/// Stride frequency as a function of root speed.
pub fn stride_frequency(speed: f64) -> f64 {
    0.6 + 0.35 * speed
}

/// Limb phase offsets: the two limbs swing in antiphase.
pub const LIMB_PHASE: [f64; 2] = [0.0, std::f64::consts::PI];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipMeta {
    pub style: u32,
    pub speed: f64,
    pub duration: f64,
    pub phase0: f64,
    pub turn_rate: f64,
}

/// Synthesize the state sequence of one kinematic clip at the env frame rate.
pub fn synth_clip(params: &EnvParams, meta: &ClipMeta) -> Vec<EnvState> {
    let style = STYLES[meta.style as usize];
    let frames = (meta.duration / params.dt).round() as usize;
    let freq = stride_frequency(meta.speed);
    let omega = 2.0 * std::f64::consts::PI * freq;
    let mut out = Vec::with_capacity(frames);
    for j in 0..frames {
        let t = j as f64 * params.dt;
        let heading = wrap_angle(meta.turn_rate * t);
        let pos = if meta.turn_rate.abs() < 1e-9 {
            [meta.speed * t, 0.0]
        } else {
            // Exact integral of speed * dir(turn_rate * t).
            let r = meta.speed / meta.turn_rate;
            [
                r * (meta.turn_rate * t).sin(),
                r * (1.0 - (meta.turn_rate * t).cos()),
            ]
        };
        let dir = heading_dir(heading);
        let mut limb_angle = [0.0; 2];
        let mut limb_vel = [0.0; 2];
        for k in 0..2 {
            let phase = omega * t + meta.phase0 + LIMB_PHASE[k];
            limb_angle[k] = style.amplitude * phase.sin() + style.offset;
            limb_vel[k] = style.amplitude * omega * phase.cos();
        }
        out.push(EnvState {
            pos,
            heading,
            vel: [meta.speed * dir[0], meta.speed * dir[1]],
            ang_vel: meta.turn_rate,
            limb_angle,
            limb_vel,
            step: j as u32,
        });
    }
    out
}

/// A set of motion windows with per-clip provenance.
#[derive(Debug, Clone)]
pub struct GaitDataset {
    pub window_frames: usize,
    pub feature_dim: usize,
    pub fps: f64,
    pub style_names: Vec<String>,
    pub clips: Vec<ClipMeta>,
    /// Flattened `window_frames * feature_dim` features per window.
    pub windows: Vec<Vec<f64>>,
    /// Clip index of each window.
    pub window_clip: Vec<u32>,
}

impl GaitDataset {
    pub fn window_dim(&self) -> usize {
        self.window_frames * self.feature_dim
    }

    pub fn style_of_window(&self, w: usize) -> u32 {
        self.clips[self.window_clip[w] as usize].style
    }

    pub fn style_count(&self) -> usize {
        self.style_names.len()
    }

    /// Per-dimension mean/std over all windows. Near-constant dimensions get
    /// a floor of 0.05 so z-scores of off-manifold inputs stay finite and
    /// bounded.
    pub fn norm_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let dim = self.window_dim();
        let n = self.windows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for w in &self.windows {
            for (m, v) in mean.iter_mut().zip(w.iter()) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for w in &self.windows {
            for (s, (v, m)) in var.iter_mut().zip(w.iter().zip(mean.iter())) {
                let d = v - m;
                *s += d * d;
            }
        }
        let std = var.iter().map(|s| (s / n).sqrt().max(0.05)).collect();
        (mean, std)
    }
}

/// Which clip collection to generate.
#[derive(Debug, Clone, PartialEq)]
pub enum DataPreset {
    /// `clips_per_style` clips for each of the three styles; speeds drawn
    /// from `speed_range`, random phase, gentle random turn rates.
    Styles {
        clips_per_style: usize,
        clip_seconds: f64,
        speed_range: (f64, f64),
    },
    /// Exactly three one-second neutral clips at 1.5, 3.0, and 5.0 m/s.
    WalkJogRun,
    /// One neutral clip at the given speed.
    SingleClip { speed: f64, clip_seconds: f64 },
}

impl DataPreset {
    pub fn parse(name: &str) -> Result<DataPreset> {
        match name {
            "styles" => Ok(DataPreset::Styles {
                clips_per_style: 20,
                clip_seconds: 3.0,
                speed_range: (1.0, 6.0),
            }),
            "walk-jog-run" => Ok(DataPreset::WalkJogRun),
            "single-clip" => Ok(DataPreset::SingleClip {
                speed: 2.0,
                clip_seconds: 4.0,
            }),
            other => Err(SmpError::Config(format!("unknown data preset '{other}'"))),
        }
    }
}

pub fn generate_gait_dataset(
    params: &EnvParams,
    preset: &DataPreset,
    rng: &mut impl Rng,
) -> GaitDataset {
    let clips: Vec<ClipMeta> = match preset {
        DataPreset::Styles {
            clips_per_style,
            clip_seconds,
            speed_range,
        } => {
            let mut clips = Vec::new();
            for style in 0..STYLES.len() {
                for _ in 0..*clips_per_style {
                    clips.push(ClipMeta {
                        style: style as u32,
                        speed: rng.gen_range(speed_range.0..speed_range.1),
                        duration: *clip_seconds,
                        phase0: rng.gen_range(0.0..2.0 * std::f64::consts::PI),
                        turn_rate: rng.gen_range(-0.5..0.5),
                    });
                }
            }
            clips
        }
        DataPreset::WalkJogRun => [1.5, 3.0, 5.0]
            .iter()
            .map(|&speed| ClipMeta {
                style: STYLE_NEUTRAL as u32,
                speed,
                duration: 1.0,
                phase0: 0.0,
                turn_rate: 0.0,
            })
            .collect(),
        DataPreset::SingleClip {
            speed,
            clip_seconds,
        } => vec![ClipMeta {
            style: STYLE_NEUTRAL as u32,
            speed: *speed,
            duration: *clip_seconds,
            phase0: 0.0,
            turn_rate: 0.0,
        }],
    };

    let mut windows = Vec::new();
    let mut window_clip = Vec::new();
    for (ci, meta) in clips.iter().enumerate() {
        let states = synth_clip(params, meta);
        if states.len() < WINDOW_FRAMES {
            continue;
        }
        for start in 0..=states.len() - WINDOW_FRAMES {
            windows.push(extract_features(
                params,
                &states[start..start + WINDOW_FRAMES],
            ));
            window_clip.push(ci as u32);
        }
    }

    GaitDataset {
        window_frames: WINDOW_FRAMES,
        feature_dim: FEATURE_DIM,
        fps: 1.0 / params.dt,
        style_names: STYLES.iter().map(|s| s.name.to_string()).collect(),
        clips,
        windows,
        window_clip,
    }
}

const DATASET_MAGIC: &[u8; 4] = b"SMPD";
const DATASET_VERSION: u32 = 1;

pub fn save_dataset(path: &Path, ds: &GaitDataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    wire::write_u32(&mut w, DATASET_VERSION)?;
    wire::write_u32(&mut w, ds.window_frames as u32)?;
    wire::write_u32(&mut w, ds.feature_dim as u32)?;
    wire::write_f64(&mut w, ds.fps)?;
    wire::write_u32(&mut w, ds.style_names.len() as u32)?;
    for name in &ds.style_names {
        wire::write_str(&mut w, name)?;
    }
    wire::write_u32(&mut w, ds.clips.len() as u32)?;
    for clip in &ds.clips {
        wire::write_u32(&mut w, clip.style)?;
        wire::write_f64(&mut w, clip.speed)?;
        wire::write_f64(&mut w, clip.duration)?;
        wire::write_f64(&mut w, clip.phase0)?;
        wire::write_f64(&mut w, clip.turn_rate)?;
    }
    wire::write_u64(&mut w, ds.windows.len() as u64)?;
    for (features, clip) in ds.windows.iter().zip(ds.window_clip.iter()) {
        wire::write_u32(&mut w, *clip)?;
        let f32s: Vec<f32> = features.iter().map(|&v| v as f32).collect();
        wire::write_f32_slice_raw(&mut w, &f32s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<GaitDataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(SmpError::Format(format!(
            "{} is not a dataset file",
            path.display()
        )));
    }
    let version = wire::read_u32(&mut r)?;
    if version != DATASET_VERSION {
        return Err(SmpError::Format(format!(
            "unsupported dataset version {version}"
        )));
    }
    let window_frames = wire::read_u32(&mut r)? as usize;
    let feature_dim = wire::read_u32(&mut r)? as usize;
    let fps = wire::read_f64(&mut r)?;
    let n_styles = wire::read_u32(&mut r)? as usize;
    let mut style_names = Vec::with_capacity(n_styles);
    for _ in 0..n_styles {
        style_names.push(wire::read_str(&mut r)?);
    }
    let n_clips = wire::read_u32(&mut r)? as usize;
    let mut clips = Vec::with_capacity(n_clips);
    for _ in 0..n_clips {
        clips.push(ClipMeta {
            style: wire::read_u32(&mut r)?,
            speed: wire::read_f64(&mut r)?,
            duration: wire::read_f64(&mut r)?,
            phase0: wire::read_f64(&mut r)?,
            turn_rate: wire::read_f64(&mut r)?,
        });
    }
    let n_windows = wire::read_u64(&mut r)? as usize;
    let dim = window_frames * feature_dim;
    let mut windows = Vec::with_capacity(n_windows);
    let mut window_clip = Vec::with_capacity(n_windows);
    for _ in 0..n_windows {
        let clip = wire::read_u32(&mut r)?;
        if clip as usize >= clips.len() {
            return Err(SmpError::Format("window references missing clip".into()));
        }
        let f32s = wire::read_f32_slice_raw(&mut r, dim)?;
        windows.push(f32s.iter().map(|&v| v as f64).collect());
        window_clip.push(clip);
    }
    Ok(GaitDataset {
        window_frames,
        feature_dim,
        fps,
        style_names,
        clips,
        windows,
        window_clip,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::features::{idx, limb_angles_from_frame};
    use crate::rng::{stream, Domain};

    fn zero_crossing_frequency(values: &[f64], fps: f64) -> f64 {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let mut crossings = 0;
        for pair in values.windows(2) {
            if (pair[0] - mean).signum() != (pair[1] - mean).signum() {
                crossings += 1;
            }
        }
        let duration = (values.len() - 1) as f64 / fps;
        crossings as f64 / (2.0 * duration)
    }

    #[test]
    fn neutral_clip_at_two_mps_oscillates_at_1_3_hz() {
        let params = EnvParams::default();
        let meta = ClipMeta {
            style: STYLE_NEUTRAL as u32,
            speed: 2.0,
            duration: 6.0,
            phase0: 0.0,
            turn_rate: 0.0,
        };
        let states = synth_clip(&params, &meta);
        let q1: Vec<f64> = states.iter().map(|s| s.limb_angle[0]).collect();
        let f = zero_crossing_frequency(&q1, 1.0 / params.dt);
        assert!((f - 1.3).abs() < 0.1, "measured {f} Hz");
    }

    #[test]
    fn zombie_limbs_are_rigid_at_quarter_pi() {
        let params = EnvParams::default();
        let meta = ClipMeta {
            style: STYLE_ZOMBIE as u32,
            speed: 2.0,
            duration: 3.0,
            phase0: 0.3,
            turn_rate: 0.0,
        };
        let states = synth_clip(&params, &meta);
        let mean = states.iter().map(|s| s.limb_angle[0]).sum::<f64>() / states.len() as f64;
        let var = states
            .iter()
            .map(|s| (s.limb_angle[0] - mean).powi(2))
            .sum::<f64>()
            / states.len() as f64;
        assert!(var < 0.01, "variance {var}");
        assert!((mean - std::f64::consts::FRAC_PI_4).abs() < 1e-9);
    }

    #[test]
    fn walk_jog_run_is_three_one_second_clips() {
        let params = EnvParams::default();
        let mut rng = stream(0, Domain::Data, 0);
        let ds = generate_gait_dataset(&params, &DataPreset::WalkJogRun, &mut rng);
        assert_eq!(ds.clips.len(), 3);
        let speeds: Vec<f64> = ds.clips.iter().map(|c| c.speed).collect();
        assert_eq!(speeds, vec![1.5, 3.0, 5.0]);
        for clip in &ds.clips {
            assert_eq!(clip.duration, 1.0);
        }
        assert!(!ds.windows.is_empty());
    }

    #[test]
    fn styles_preset_counts() {
        let params = EnvParams::default();
        let mut rng = stream(1, Domain::Data, 0);
        let preset = DataPreset::Styles {
            clips_per_style: 4,
            clip_seconds: 2.0,
            speed_range: (1.0, 6.0),
        };
        let ds = generate_gait_dataset(&params, &preset, &mut rng);
        assert_eq!(ds.clips.len(), 12);
        let per_clip = (2.0 * 30.0) as usize - WINDOW_FRAMES + 1;
        assert_eq!(ds.windows.len(), 12 * per_clip);
    }

    #[test]
    fn extracted_features_reproduce_analytic_limb_angles() {
        let params = EnvParams::default();
        let mut rng = stream(2, Domain::Data, 0);
        let preset = DataPreset::Styles {
            clips_per_style: 2,
            clip_seconds: 1.0,
            speed_range: (1.0, 6.0),
        };
        let ds = generate_gait_dataset(&params, &preset, &mut rng);
        for (w, features) in ds.windows.iter().enumerate().step_by(7) {
            let meta = &ds.clips[ds.window_clip[w] as usize];
            let style = STYLES[meta.style as usize];
            let omega = 2.0 * std::f64::consts::PI * stride_frequency(meta.speed);
            // Window w of its clip starts at frame equal to its in-clip index.
            let clip_first_window = ds
                .window_clip
                .iter()
                .position(|&c| c == ds.window_clip[w])
                .unwrap();
            let start = w - clip_first_window;
            for j in 0..ds.window_frames {
                let t = (start + j) as f64 * params.dt;
                let frame = &features[j * FEATURE_DIM..(j + 1) * FEATURE_DIM];
                let angles = limb_angles_from_frame(frame);
                for k in 0..2 {
                    let expect = wrap_angle(
                        style.amplitude * (omega * t + meta.phase0 + LIMB_PHASE[k]).sin()
                            + style.offset,
                    );
                    assert!(
                        (angles[k] - expect).abs() < 1e-9,
                        "window {w} frame {j} limb {k}"
                    );
                }
            }
        }
    }

    #[test]
    fn curved_clip_velocity_follows_heading() {
        let params = EnvParams::default();
        let meta = ClipMeta {
            style: STYLE_NEUTRAL as u32,
            speed: 3.0,
            duration: 2.0,
            phase0: 0.0,
            turn_rate: 0.4,
        };
        let states = synth_clip(&params, &meta);
        for s in &states {
            assert!((s.speed() - 3.0).abs() < 1e-9);
            let dir = heading_dir(s.heading);
            assert!((s.vel[0] - 3.0 * dir[0]).abs() < 1e-9);
        }
        // Local-frame velocity is (speed, 0) in every frame's own anchor.
        let f = extract_features(&params, &states[..WINDOW_FRAMES]);
        let last = &f[(WINDOW_FRAMES - 1) * FEATURE_DIM..];
        assert!((last[idx::VEL_X] - 3.0).abs() < 1e-9);
        assert!(last[idx::VEL_Y].abs() < 1e-9);
    }

    #[test]
    fn dataset_file_round_trip_and_determinism() {
        let params = EnvParams::default();
        let preset = DataPreset::Styles {
            clips_per_style: 2,
            clip_seconds: 1.0,
            speed_range: (1.0, 6.0),
        };
        let mut rng_a = stream(9, Domain::Data, 0);
        let mut rng_b = stream(9, Domain::Data, 0);
        let a = generate_gait_dataset(&params, &preset, &mut rng_a);
        let b = generate_gait_dataset(&params, &preset, &mut rng_b);

        let dir = std::env::temp_dir().join(format!("smp-ds-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let pa = dir.join("a.smpd");
        let pb = dir.join("b.smpd");
        save_dataset(&pa, &a).unwrap();
        save_dataset(&pb, &b).unwrap();
        let bytes_a = std::fs::read(&pa).unwrap();
        let bytes_b = std::fs::read(&pb).unwrap();
        assert_eq!(bytes_a, bytes_b);

        let back = load_dataset(&pa).unwrap();
        assert_eq!(back.windows.len(), a.windows.len());
        assert_eq!(back.style_names, a.style_names);
        assert_eq!(back.clips.len(), a.clips.len());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn norm_stats_have_floored_std() {
        let params = EnvParams::default();
        let mut rng = stream(3, Domain::Data, 0);
        let ds = generate_gait_dataset(&params, &DataPreset::WalkJogRun, &mut rng);
        let (mean, std) = ds.norm_stats();
        assert_eq!(mean.len(), ds.window_dim());
        assert!(std.iter().all(|&s| s >= 0.05));
    }
}
