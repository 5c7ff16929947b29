//! The conditioned eps-prediction network.
//!
//! Architecture: a sinusoidal timestep embedding is concatenated with a
//! learned style-embedding row (including a row for the unconditional token)
//! and mapped through a small SiLU head to a FiLM embedding; the trunk MLP
//! reads the flattened window and is modulated by that embedding on every
//! hidden layer. Reward and sampling paths evaluate the EMA shadow of the
//! parameters; the live parameters exist only for training.

use std::cell::RefCell;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::schedule::NoiseSchedule;
use super::{EpsPredictor, StyleLabel};
use crate::error::{Result, SmpError};
use crate::nn::{
    read_checkpoint, sinusoidal_embedding, write_checkpoint, Activation, Block, EmaShadow,
    Manifest, Mlp, MlpSpec, ParamSet, Trace,
};
use crate::rng::{stream, Domain};
use crate::wire;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserConfig {
    pub window_frames: usize,
    pub feature_dim: usize,
    pub style_count: usize,
    pub hidden: Vec<usize>,
    pub film_dim: usize,
    pub time_embed_dim: usize,
    pub style_embed_dim: usize,
    pub diffusion_steps: usize,
}

impl DenoiserConfig {
    pub fn new(window_frames: usize, feature_dim: usize, style_count: usize) -> Self {
        Self {
            window_frames,
            feature_dim,
            style_count,
            hidden: vec![64, 64],
            film_dim: 32,
            time_embed_dim: 32,
            style_embed_dim: 16,
            diffusion_steps: 50,
        }
    }

    pub fn window_dim(&self) -> usize {
        self.window_frames * self.feature_dim
    }

    pub fn manifest(&self) -> Manifest {
        let head_in = self.time_embed_dim + self.style_embed_dim;
        let mut trunk_layers: Vec<(usize, Activation)> =
            self.hidden.iter().map(|&w| (w, Activation::Silu)).collect();
        trunk_layers.push((self.window_dim(), Activation::Linear));
        Manifest::new(vec![
            Block::Table {
                rows: self.style_count + 1,
                cols: self.style_embed_dim,
            },
            Block::Mlp(MlpSpec::new(
                head_in,
                vec![
                    (self.film_dim, Activation::Silu),
                    (self.film_dim, Activation::Linear),
                ],
                0,
            )),
            Block::Mlp(
                MlpSpec::new(self.window_dim(), trunk_layers, self.film_dim)
                    .with_output_skip()
                    .with_film_output(),
            ),
        ])
    }
}

const BLOCK_STYLE_TABLE: usize = 0;
const BLOCK_COND_HEAD: usize = 1;
const BLOCK_TRUNK: usize = 2;

/// Forward-pass scratch space; one per thread.
pub struct DenoiserWorkspace {
    time_embed: Vec<f64>,
    head_in: Vec<f64>,
    embed: Vec<f64>,
    head_trace: Trace,
    trunk_trace: Trace,
}

impl DenoiserWorkspace {
    pub fn new(config: &DenoiserConfig) -> Self {
        let manifest = config.manifest();
        let head_spec = match &manifest.blocks[BLOCK_COND_HEAD] {
            Block::Mlp(s) => s.clone(),
            _ => unreachable!(),
        };
        let trunk_spec = match &manifest.blocks[BLOCK_TRUNK] {
            Block::Mlp(s) => s.clone(),
            _ => unreachable!(),
        };
        Self {
            time_embed: vec![0.0; config.time_embed_dim],
            head_in: vec![0.0; config.time_embed_dim + config.style_embed_dim],
            embed: vec![0.0; config.film_dim],
            head_trace: Trace::new(&head_spec),
            trunk_trace: Trace::new(&trunk_spec),
        }
    }
}

/// Gradient-capable workspace for training steps.
pub struct DenoiserTrainScope {
    pub ws: DenoiserWorkspace,
    pub grads: Vec<f64>,
    embed_grad: Vec<f64>,
    head_in_grad: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DenoiserModel {
    pub config: DenoiserConfig,
    pub schedule: NoiseSchedule,
    pub params: ParamSet,
    pub ema: EmaShadow,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    pub style_names: Vec<String>,
    /// Mean per-dimension squared eps-prediction error per step, measured
    /// near the end of training; indexed 1..=N, entry 0 unused.
    pub step_residual: Vec<f64>,
    head: Mlp,
    trunk: Mlp,
}

thread_local! {
    static WORKSPACE: RefCell<Option<(usize, DenoiserWorkspace)>> = const { RefCell::new(None) };
}

impl DenoiserModel {
    pub fn new(
        config: DenoiserConfig,
        schedule: NoiseSchedule,
        norm_mean: Vec<f64>,
        norm_std: Vec<f64>,
        style_names: Vec<String>,
        seed: u64,
        ema_decay: f64,
    ) -> Result<Self> {
        if schedule.n != config.diffusion_steps {
            return Err(SmpError::Config(
                "schedule length disagrees with config".into(),
            ));
        }
        if norm_mean.len() != config.window_dim() || norm_std.len() != config.window_dim() {
            return Err(SmpError::Config(
                "normalization stats do not match window".into(),
            ));
        }
        if style_names.len() != config.style_count {
            return Err(SmpError::Config(
                "style name table does not match style count".into(),
            ));
        }
        let manifest = config.manifest();
        let mut rng = stream(seed, Domain::Init, 0);
        let params = ParamSet::init(manifest, &mut rng);
        let ema = EmaShadow::new(ema_decay, &params.values)?;
        let (head, trunk) = Self::block_handles(&config);
        let step_residual = vec![0.0; schedule.n + 1];
        Ok(Self {
            config,
            schedule,
            params,
            ema,
            norm_mean,
            norm_std,
            style_names,
            step_residual,
            head,
            trunk,
        })
    }

    fn block_handles(config: &DenoiserConfig) -> (Mlp, Mlp) {
        let manifest = config.manifest();
        let head = match &manifest.blocks[BLOCK_COND_HEAD] {
            Block::Mlp(s) => Mlp::new(s.clone()),
            _ => unreachable!(),
        };
        let trunk = match &manifest.blocks[BLOCK_TRUNK] {
            Block::Mlp(s) => Mlp::new(s.clone()),
            _ => unreachable!(),
        };
        (head, trunk)
    }

    pub fn make_workspace(&self) -> DenoiserWorkspace {
        DenoiserWorkspace::new(&self.config)
    }

    pub fn make_train_scope(&self) -> DenoiserTrainScope {
        DenoiserTrainScope {
            ws: DenoiserWorkspace::new(&self.config),
            grads: vec![0.0; self.params.values.len()],
            embed_grad: vec![0.0; self.config.film_dim],
            head_in_grad: vec![0.0; self.config.time_embed_dim + self.config.style_embed_dim],
        }
    }

    fn style_row_index(&self, style: StyleLabel) -> usize {
        match style {
            StyleLabel::Null => self.config.style_count,
            StyleLabel::Id(s) => {
                assert!(s < self.config.style_count, "style index {s} out of range");
                s
            }
        }
    }

    /// Forward pass with an explicit parameter array (live or EMA).
    pub fn eps_with_params(
        &self,
        values: &[f64],
        x: &[f64],
        step: usize,
        style: StyleLabel,
        ws: &mut DenoiserWorkspace,
        out: &mut [f64],
    ) {
        assert!(
            step >= 1 && step <= self.schedule.n,
            "diffusion step out of range"
        );
        let cfg = &self.config;
        sinusoidal_embedding(step, cfg.time_embed_dim, &mut ws.time_embed);
        ws.head_in[..cfg.time_embed_dim].copy_from_slice(&ws.time_embed);
        let row = self.style_row_index(style);
        let table_off = self.params.manifest.block_offset(BLOCK_STYLE_TABLE);
        let row_slice = &values
            [table_off + row * cfg.style_embed_dim..table_off + (row + 1) * cfg.style_embed_dim];
        ws.head_in[cfg.time_embed_dim..].copy_from_slice(row_slice);

        let head_off = self.params.manifest.block_offset(BLOCK_COND_HEAD);
        let head_len = self.params.manifest.blocks[BLOCK_COND_HEAD].param_count();
        let embed = self
            .head
            .forward(
                &values[head_off..head_off + head_len],
                &ws.head_in,
                None,
                &mut ws.head_trace,
            )
            .expect("head shapes are fixed by the manifest");
        ws.embed.copy_from_slice(embed);

        let trunk_off = self.params.manifest.block_offset(BLOCK_TRUNK);
        let trunk_len = self.params.manifest.blocks[BLOCK_TRUNK].param_count();
        let y = self
            .trunk
            .forward(
                &values[trunk_off..trunk_off + trunk_len],
                x,
                Some(&ws.embed),
                &mut ws.trunk_trace,
            )
            .expect("trunk shapes are fixed by the manifest");
        out.copy_from_slice(y);
    }

    /// Forward + backward against `d(loss)/d(eps_hat)`, accumulating into
    /// `scope.grads`. The forward activations of the most recent
    /// `eps_with_params` call in `scope.ws` are reused.
    pub fn backward_into(
        &self,
        values: &[f64],
        style: StyleLabel,
        out_grad: &[f64],
        scope: &mut DenoiserTrainScope,
    ) {
        let cfg = &self.config;
        let trunk_off = self.params.manifest.block_offset(BLOCK_TRUNK);
        let trunk_len = self.params.manifest.blocks[BLOCK_TRUNK].param_count();
        scope.embed_grad.fill(0.0);
        self.trunk
            .backward(
                &values[trunk_off..trunk_off + trunk_len],
                &mut scope.ws.trunk_trace,
                out_grad,
                &mut scope.grads[trunk_off..trunk_off + trunk_len],
                None,
                Some(&mut scope.embed_grad),
            )
            .expect("trunk backward shapes are fixed");

        let head_off = self.params.manifest.block_offset(BLOCK_COND_HEAD);
        let head_len = self.params.manifest.blocks[BLOCK_COND_HEAD].param_count();
        scope.head_in_grad.fill(0.0);
        self.head
            .backward(
                &values[head_off..head_off + head_len],
                &mut scope.ws.head_trace,
                &scope.embed_grad,
                &mut scope.grads[head_off..head_off + head_len],
                Some(&mut scope.head_in_grad),
                None,
            )
            .expect("head backward shapes are fixed");

        // Style-table gradient: the embedding row is part of the head input.
        let row = self.style_row_index(style);
        let table_off = self.params.manifest.block_offset(BLOCK_STYLE_TABLE);
        let grow = &mut scope.grads
            [table_off + row * cfg.style_embed_dim..table_off + (row + 1) * cfg.style_embed_dim];
        for (g, d) in grow
            .iter_mut()
            .zip(scope.head_in_grad[cfg.time_embed_dim..].iter())
        {
            *g += d;
        }
    }

    pub fn normalize(&self, raw: &[f64], out: &mut [f64]) {
        for ((o, r), (m, s)) in out
            .iter_mut()
            .zip(raw.iter())
            .zip(self.norm_mean.iter().zip(self.norm_std.iter()))
        {
            *o = (r - m) / s;
        }
    }

    pub fn denormalize(&self, z: &[f64], out: &mut [f64]) {
        for ((o, v), (m, s)) in out
            .iter_mut()
            .zip(z.iter())
            .zip(self.norm_mean.iter().zip(self.norm_std.iter()))
        {
            *o = v * s + m;
        }
    }

    /// SHA-256 over the manifest, EMA weights, live weights, and
    /// normalization stats. Any parameter mutation changes this.
    pub fn param_digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.params.manifest.encode());
        for v in &self.ema.values {
            hasher.update(v.to_le_bytes());
        }
        for v in &self.params.values {
            hasher.update(v.to_le_bytes());
        }
        for v in self.norm_mean.iter().chain(self.norm_std.iter()) {
            hasher.update(v.to_le_bytes());
        }
        for v in &self.step_residual {
            hasher.update(v.to_le_bytes());
        }
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut ext = Vec::new();
        wire::write_u32(&mut ext, self.config.window_frames as u32)?;
        wire::write_u32(&mut ext, self.config.feature_dim as u32)?;
        wire::write_u32(&mut ext, self.config.style_count as u32)?;
        wire::write_u32(&mut ext, self.config.hidden.len() as u32)?;
        for &h in &self.config.hidden {
            wire::write_u32(&mut ext, h as u32)?;
        }
        wire::write_u32(&mut ext, self.config.film_dim as u32)?;
        wire::write_u32(&mut ext, self.config.time_embed_dim as u32)?;
        wire::write_u32(&mut ext, self.config.style_embed_dim as u32)?;
        wire::write_u32(&mut ext, self.config.diffusion_steps as u32)?;
        wire::write_f64(&mut ext, self.ema.decay)?;
        wire::write_f64_slice(&mut ext, self.schedule.betas())?;
        wire::write_f64_slice(&mut ext, &self.norm_mean)?;
        wire::write_f64_slice(&mut ext, &self.norm_std)?;
        wire::write_u32(&mut ext, self.style_names.len() as u32)?;
        for name in &self.style_names {
            wire::write_str(&mut ext, name)?;
        }
        wire::write_f64_slice(&mut ext, &self.step_residual)?;
        write_checkpoint(
            path,
            &self.params,
            Some(&self.ema.values),
            &[(*b"DIFF", ext)],
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = read_checkpoint(path)?;
        let mut r = ckpt.require_section(b"DIFF")?;
        let window_frames = wire::read_u32(&mut r)? as usize;
        let feature_dim = wire::read_u32(&mut r)? as usize;
        let style_count = wire::read_u32(&mut r)? as usize;
        let n_hidden = wire::read_u32(&mut r)? as usize;
        let mut hidden = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden.push(wire::read_u32(&mut r)? as usize);
        }
        let film_dim = wire::read_u32(&mut r)? as usize;
        let time_embed_dim = wire::read_u32(&mut r)? as usize;
        let style_embed_dim = wire::read_u32(&mut r)? as usize;
        let diffusion_steps = wire::read_u32(&mut r)? as usize;
        let ema_decay = wire::read_f64(&mut r)?;
        let betas = wire::read_f64_slice(&mut r)?;
        let norm_mean = wire::read_f64_slice(&mut r)?;
        let norm_std = wire::read_f64_slice(&mut r)?;
        let n_names = wire::read_u32(&mut r)? as usize;
        let mut style_names = Vec::with_capacity(n_names);
        for _ in 0..n_names {
            style_names.push(wire::read_str(&mut r)?);
        }
        let step_residual = wire::read_f64_slice(&mut r)?;
        if step_residual.len() != diffusion_steps + 1 {
            return Err(SmpError::Format("step residual table length mismatch".into()));
        }

        let config = DenoiserConfig {
            window_frames,
            feature_dim,
            style_count,
            hidden,
            film_dim,
            time_embed_dim,
            style_embed_dim,
            diffusion_steps,
        };
        if config.manifest() != ckpt.params.manifest {
            return Err(SmpError::Format(
                "checkpoint manifest does not match config".into(),
            ));
        }
        let schedule = NoiseSchedule::from_betas(betas)?;
        if schedule.n != diffusion_steps {
            return Err(SmpError::Format(
                "schedule length disagrees with config".into(),
            ));
        }
        let ema_values = ckpt.ema.ok_or_else(|| {
            SmpError::Format("diffusion checkpoint is missing EMA weights".into())
        })?;
        let (head, trunk) = Self::block_handles(&config);
        Ok(Self {
            config,
            schedule,
            params: ckpt.params,
            ema: EmaShadow {
                decay: ema_decay,
                values: ema_values,
            },
            norm_mean,
            norm_std,
            style_names,
            step_residual,
            head,
            trunk,
        })
    }
}

impl EpsPredictor for DenoiserModel {
    fn window_dim(&self) -> usize {
        self.config.window_dim()
    }

    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn digest(&self) -> String {
        self.param_digest()
    }

    fn style_count(&self) -> usize {
        self.config.style_count
    }

    fn prediction_residual(&self, i: usize) -> f64 {
        self.step_residual.get(i).copied().unwrap_or(0.0)
    }

    /// Evaluate with the EMA parameters. Uses a per-thread cached workspace,
    /// so a frozen model can serve many rollout threads concurrently.
    fn predict(&self, x: &[f64], i: usize, style: StyleLabel, out: &mut [f64]) {
        let key = self.params.values.len() ^ (self.config.window_dim() << 24);
        WORKSPACE.with(|slot| {
            let mut slot = slot.borrow_mut();
            let rebuild = match slot.as_ref() {
                Some((k, _)) => *k != key,
                None => true,
            };
            if rebuild {
                *slot = Some((key, DenoiserWorkspace::new(&self.config)));
            }
            let (_, ws) = slot.as_mut().unwrap();
            self.eps_with_params(&self.ema.values, x, i, style, ws, out);
        });
    }
}
