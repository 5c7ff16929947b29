//! Minimal dense-network layer used by the denoiser, policy, and value nets.
//!
//! Networks are described by a [`Manifest`] (an ordered list of blocks) and
//! stored as one flat `f64` parameter array. An [`Mlp`] block is a stack of
//! affine layers with optional feature-wise (FiLM) conditioning on the hidden
//! layers: `h = (Wx + b) * scale(e) + shift(e)`, where `scale = 1 + Ws·e` and
//! `shift = Wb·e` for an embedding `e`. A [`Block::Table`] block is a raw
//! parameter matrix (embedding tables, log-std vectors).
//!
//! Everything is f64 and single-threaded per call; a parameter array that is
//! not being mutated can be read concurrently from many threads.

mod adam;
mod checkpoint;
mod ema;

pub use adam::Adam;
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use ema::EmaShadow;

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Result, SmpError};
use crate::wire;

/// Dot product with four independent accumulators; the split keeps the
/// floating-point dependency chain short enough to pipeline.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut ac = a.chunks_exact(4);
    let mut bc = b.chunks_exact(4);
    for (x, y) in (&mut ac).zip(&mut bc) {
        acc[0] = x[0].mul_add(y[0], acc[0]);
        acc[1] = x[1].mul_add(y[1], acc[1]);
        acc[2] = x[2].mul_add(y[2], acc[2]);
        acc[3] = x[3].mul_add(y[3], acc[3]);
    }
    let mut tail = 0.0;
    for (x, y) in ac.remainder().iter().zip(bc.remainder().iter()) {
        tail = x.mul_add(*y, tail);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Tanh,
    Silu,
}

impl Activation {
    #[inline]
    fn value(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Tanh => z.tanh(),
            Activation::Silu => z / (1.0 + (-z).exp()),
        }
    }

    /// Derivative at pre-activation `z` with post-activation `a` available.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - a * a,
            Activation::Silu => {
                let sig = 1.0 / (1.0 + (-z).exp());
                sig * (1.0 + z * (1.0 - sig))
            }
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Tanh => 1,
            Activation::Silu => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Linear),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Silu),
            t => Err(SmpError::Format(format!("unknown activation tag {t}"))),
        }
    }
}

/// Shape of one MLP block, independent of its parameter values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input: usize,
    /// `(width, activation)` per layer; the last entry is the output layer.
    pub layers: Vec<(usize, Activation)>,
    /// Embedding dimension for FiLM conditioning of hidden layers; 0 disables it.
    pub film_dim: usize,
    /// Concatenate the raw input to the output layer's input. Gives the
    /// network a full-rank linear path from input to output, which noise
    /// prediction needs regardless of hidden width.
    pub output_skip: bool,
    /// Also modulate the output layer with FiLM. Noise prediction needs a
    /// noise-level-dependent gain on the full-rank path, which hidden-layer
    /// conditioning alone cannot express.
    pub film_output: bool,
}

impl MlpSpec {
    pub fn new(input: usize, layers: Vec<(usize, Activation)>, film_dim: usize) -> Self {
        assert!(!layers.is_empty(), "an MLP needs at least one layer");
        Self {
            input,
            layers,
            film_dim,
            output_skip: false,
            film_output: false,
        }
    }

    pub fn with_output_skip(mut self) -> Self {
        assert!(
            self.layers.len() >= 2,
            "output skip needs at least one hidden layer"
        );
        self.output_skip = true;
        self
    }

    pub fn with_film_output(mut self) -> Self {
        self.film_output = true;
        self
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().0
    }

    fn layer_in(&self, l: usize) -> usize {
        let base = if l == 0 {
            self.input
        } else {
            self.layers[l - 1].0
        };
        if self.output_skip && l + 1 == self.layers.len() {
            base + self.input
        } else {
            base
        }
    }

    /// FiLM applies to every layer except the last, unless `film_output`.
    fn has_film(&self, l: usize) -> bool {
        self.film_dim > 0 && (self.film_output || l + 1 < self.layers.len())
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for l in 0..self.layers.len() {
            let (out, _) = self.layers[l];
            n += (self.layer_in(l) + 1) * out;
            if self.has_film(l) {
                n += 2 * out * self.film_dim;
            }
        }
        n
    }

    fn max_width(&self) -> usize {
        let widest_layer = self.layers.iter().map(|&(w, _)| w).max().unwrap();
        let widest_in = (0..self.layers.len())
            .map(|l| self.layer_in(l))
            .max()
            .unwrap();
        widest_layer.max(self.input).max(widest_in)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Block {
    Mlp(MlpSpec),
    Table { rows: usize, cols: usize },
}

impl Block {
    pub fn param_count(&self) -> usize {
        match self {
            Block::Mlp(spec) => spec.param_count(),
            Block::Table { rows, cols } => rows * cols,
        }
    }
}

/// Ordered list of blocks sharing one flat parameter array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub blocks: Vec<Block>,
}

impl Manifest {
    pub fn new(blocks: Vec<Block>) -> Self {
        Self { blocks }
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(Block::param_count).sum()
    }

    pub fn block_offset(&self, idx: usize) -> usize {
        self.blocks[..idx].iter().map(Block::param_count).sum()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        wire::write_u32(&mut out, self.blocks.len() as u32).unwrap();
        for block in &self.blocks {
            match block {
                Block::Mlp(spec) => {
                    wire::write_u8(&mut out, 0).unwrap();
                    wire::write_u32(&mut out, spec.input as u32).unwrap();
                    wire::write_u32(&mut out, spec.film_dim as u32).unwrap();
                    wire::write_u8(&mut out, spec.output_skip as u8).unwrap();
                    wire::write_u8(&mut out, spec.film_output as u8).unwrap();
                    wire::write_u32(&mut out, spec.layers.len() as u32).unwrap();
                    for &(width, act) in &spec.layers {
                        wire::write_u32(&mut out, width as u32).unwrap();
                        wire::write_u8(&mut out, act.tag()).unwrap();
                    }
                }
                Block::Table { rows, cols } => {
                    wire::write_u8(&mut out, 1).unwrap();
                    wire::write_u32(&mut out, *rows as u32).unwrap();
                    wire::write_u32(&mut out, *cols as u32).unwrap();
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let n = wire::read_u32(&mut r)? as usize;
        let mut blocks = Vec::with_capacity(n);
        for _ in 0..n {
            match wire::read_u8(&mut r)? {
                0 => {
                    let input = wire::read_u32(&mut r)? as usize;
                    let film_dim = wire::read_u32(&mut r)? as usize;
                    let output_skip = wire::read_u8(&mut r)? != 0;
                    let film_output = wire::read_u8(&mut r)? != 0;
                    let n_layers = wire::read_u32(&mut r)? as usize;
                    if n_layers == 0 {
                        return Err(SmpError::Format("MLP block with zero layers".into()));
                    }
                    let mut layers = Vec::with_capacity(n_layers);
                    for _ in 0..n_layers {
                        let width = wire::read_u32(&mut r)? as usize;
                        let act = Activation::from_tag(wire::read_u8(&mut r)?)?;
                        layers.push((width, act));
                    }
                    blocks.push(Block::Mlp(MlpSpec {
                        input,
                        layers,
                        film_dim,
                        output_skip,
                        film_output,
                    }));
                }
                1 => {
                    let rows = wire::read_u32(&mut r)? as usize;
                    let cols = wire::read_u32(&mut r)? as usize;
                    blocks.push(Block::Table { rows, cols });
                }
                k => return Err(SmpError::Format(format!("unknown block kind {k}"))),
            }
        }
        if !r.is_empty() {
            return Err(SmpError::Format("trailing bytes in manifest".into()));
        }
        Ok(Self { blocks })
    }
}

/// Flat parameter storage plus the manifest describing its layout.
#[derive(Debug, Clone)]
pub struct ParamSet {
    pub manifest: Manifest,
    pub values: Vec<f64>,
}

impl ParamSet {
    pub fn zeros(manifest: Manifest) -> Self {
        let n = manifest.param_count();
        Self {
            manifest,
            values: vec![0.0; n],
        }
    }

    /// Scaled-uniform fan-in initialization: weights `U(-sqrt(3/fan_in), ..)`,
    /// biases zero, FiLM projections at 0.3x that scale so conditioning
    /// starts near identity but trains from the first step, tables
    /// `U(-0.5, 0.5)`.
    pub fn init(manifest: Manifest, rng: &mut impl Rng) -> Self {
        let mut set = Self::zeros(manifest);
        let mut offset = 0;
        let blocks = set.manifest.blocks.clone();
        for block in &blocks {
            let len = block.param_count();
            let slice = &mut set.values[offset..offset + len];
            match block {
                Block::Mlp(spec) => init_mlp(spec, slice, rng),
                Block::Table { .. } => {
                    for v in slice.iter_mut() {
                        *v = rng.gen_range(-0.5..0.5);
                    }
                }
            }
            offset += len;
        }
        set
    }

    pub fn block_slice(&self, idx: usize) -> &[f64] {
        let off = self.manifest.block_offset(idx);
        &self.values[off..off + self.manifest.blocks[idx].param_count()]
    }

    pub fn block_slice_mut(&mut self, idx: usize) -> &mut [f64] {
        let off = self.manifest.block_offset(idx);
        let len = self.manifest.blocks[idx].param_count();
        &mut self.values[off..off + len]
    }
}

fn init_mlp(spec: &MlpSpec, params: &mut [f64], rng: &mut impl Rng) {
    let mut off = 0;
    for l in 0..spec.layers.len() {
        let (out, _) = spec.layers[l];
        let fan_in = spec.layer_in(l);
        let bound = (3.0 / fan_in as f64).sqrt();
        for w in params[off..off + out * fan_in].iter_mut() {
            *w = rng.gen_range(-bound..bound);
        }
        off += out * fan_in;
        off += out; // biases stay zero
        if spec.has_film(l) {
            let film_bound = 0.3 * (3.0 / spec.film_dim as f64).sqrt();
            for w in params[off..off + 2 * out * spec.film_dim].iter_mut() {
                *w = rng.gen_range(-film_bound..film_bound);
            }
            off += 2 * out * spec.film_dim;
        }
    }
    debug_assert_eq!(off, spec.param_count());
}

/// Per-call activation storage for one MLP block. Reusing a trace across
/// calls avoids allocation in training loops.
#[derive(Debug, Clone)]
pub struct Trace {
    input: Vec<f64>,
    /// Pre-FiLM affine outputs, per layer (only filled on FiLM layers).
    z: Vec<Vec<f64>>,
    /// Pre-activation values (post-FiLM), per layer.
    pre: Vec<Vec<f64>>,
    /// Post-activation values, per layer.
    out: Vec<Vec<f64>>,
    /// FiLM scales per layer, as computed in the forward pass.
    scale: Vec<Vec<f64>>,
    cond: Vec<f64>,
    has_cond: bool,
    /// Concatenated (last hidden, input) buffer for the output-skip path.
    concat: Vec<f64>,
    scratch_a: Vec<f64>,
    scratch_b: Vec<f64>,
}

impl Trace {
    pub fn new(spec: &MlpSpec) -> Self {
        let z = spec
            .layers
            .iter()
            .map(|&(w, _)| vec![0.0; w])
            .collect::<Vec<_>>();
        let concat_len = if spec.output_skip {
            spec.layer_in(spec.layers.len() - 1)
        } else {
            0
        };
        Self {
            input: vec![0.0; spec.input],
            z: z.clone(),
            pre: z.clone(),
            out: z.clone(),
            scale: z,
            cond: vec![0.0; spec.film_dim],
            has_cond: false,
            concat: vec![0.0; concat_len],
            scratch_a: vec![0.0; spec.max_width()],
            scratch_b: vec![0.0; spec.max_width()],
        }
    }

    pub fn output(&self) -> &[f64] {
        self.out.last().unwrap()
    }
}

/// Shape-only handle for running an MLP block over external parameter slices.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub spec: MlpSpec,
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Self {
        Self { spec }
    }

    pub fn make_trace(&self) -> Trace {
        Trace::new(&self.spec)
    }

    /// Forward pass. `cond` is the FiLM embedding; `None` means identity
    /// conditioning (scale 1, shift 0), which equals passing a zero embedding.
    pub fn forward<'t>(
        &self,
        params: &[f64],
        input: &[f64],
        cond: Option<&[f64]>,
        trace: &'t mut Trace,
    ) -> Result<&'t [f64]> {
        let spec = &self.spec;
        if input.len() != spec.input {
            return Err(SmpError::Config(format!(
                "input length {} does not match manifest input size {}",
                input.len(),
                spec.input
            )));
        }
        if params.len() != spec.param_count() {
            return Err(SmpError::Config(format!(
                "parameter slice length {} does not match manifest count {}",
                params.len(),
                spec.param_count()
            )));
        }
        if let Some(e) = cond {
            if e.len() != spec.film_dim {
                return Err(SmpError::Config(format!(
                    "conditioning embedding length {} does not match film dim {}",
                    e.len(),
                    spec.film_dim
                )));
            }
            trace.cond.copy_from_slice(e);
            trace.has_cond = true;
        } else {
            trace.has_cond = false;
        }
        trace.input.copy_from_slice(input);

        let mut off = 0;
        for l in 0..spec.layers.len() {
            let (out_dim, act) = spec.layers[l];
            let in_dim = spec.layer_in(l);
            let w = &params[off..off + out_dim * in_dim];
            off += out_dim * in_dim;
            let b = &params[off..off + out_dim];
            off += out_dim;

            // Split borrows: previous layer's output feeds this layer.
            let (done, rest) = trace.out.split_at_mut(l);
            let skip_here = spec.output_skip && l + 1 == spec.layers.len();
            let x: &[f64] = if skip_here {
                let prev: &[f64] = if l == 0 { &trace.input } else { &done[l - 1] };
                trace.concat[..prev.len()].copy_from_slice(prev);
                trace.concat[prev.len()..].copy_from_slice(&trace.input);
                &trace.concat
            } else if l == 0 {
                &trace.input
            } else {
                &done[l - 1]
            };
            let out_buf = &mut rest[0];

            let z_buf = &mut trace.z[l];
            for j in 0..out_dim {
                let row = &w[j * in_dim..(j + 1) * in_dim];
                z_buf[j] = b[j] + dot(row, x);
            }

            let pre_buf = &mut trace.pre[l];
            if spec.has_film(l) {
                let ws = &params[off..off + out_dim * spec.film_dim];
                off += out_dim * spec.film_dim;
                let wb = &params[off..off + out_dim * spec.film_dim];
                off += out_dim * spec.film_dim;
                let scale_buf = &mut trace.scale[l];
                if trace.has_cond {
                    let e = &trace.cond;
                    for j in 0..out_dim {
                        let srow = &ws[j * spec.film_dim..(j + 1) * spec.film_dim];
                        let brow = &wb[j * spec.film_dim..(j + 1) * spec.film_dim];
                        let mut s = 1.0;
                        let mut t = 0.0;
                        for k in 0..spec.film_dim {
                            s = srow[k].mul_add(e[k], s);
                            t = brow[k].mul_add(e[k], t);
                        }
                        scale_buf[j] = s;
                        pre_buf[j] = z_buf[j] * s + t;
                    }
                } else {
                    scale_buf.fill(1.0);
                    pre_buf.copy_from_slice(z_buf);
                }
            } else {
                pre_buf.copy_from_slice(z_buf);
            }

            for j in 0..out_dim {
                out_buf[j] = act.value(pre_buf[j]);
            }
        }
        Ok(trace.output())
    }

    /// Backward pass using the activations in `trace`. Parameter gradients
    /// are accumulated (`+=`) into `param_grads`; `input_grad` and
    /// `cond_grad`, when given, are accumulated as well.
    pub fn backward(
        &self,
        params: &[f64],
        trace: &mut Trace,
        output_grad: &[f64],
        param_grads: &mut [f64],
        mut input_grad: Option<&mut [f64]>,
        mut cond_grad: Option<&mut [f64]>,
    ) -> Result<()> {
        let spec = &self.spec;
        if output_grad.len() != spec.output_dim() {
            return Err(SmpError::Config(format!(
                "output grad length {} does not match output size {}",
                output_grad.len(),
                spec.output_dim()
            )));
        }
        if param_grads.len() != spec.param_count() {
            return Err(SmpError::Config("gradient buffer length mismatch".into()));
        }

        // Parameter offsets of every layer, so we can walk layers in reverse.
        let mut offsets = Vec::with_capacity(spec.layers.len());
        let mut off = 0;
        for l in 0..spec.layers.len() {
            offsets.push(off);
            let (out_dim, _) = spec.layers[l];
            off += (spec.layer_in(l) + 1) * out_dim;
            if spec.has_film(l) {
                off += 2 * out_dim * spec.film_dim;
            }
        }

        trace.scratch_a[..output_grad.len()].copy_from_slice(output_grad);
        let mut current_is_a = true;

        for l in (0..spec.layers.len()).rev() {
            let (out_dim, act) = spec.layers[l];
            let in_dim = spec.layer_in(l);
            let base = offsets[l];

            let (d_out, d_prev) = if current_is_a {
                (&mut trace.scratch_a, &mut trace.scratch_b)
            } else {
                (&mut trace.scratch_b, &mut trace.scratch_a)
            };

            // dh = d_out * act'(pre)
            for j in 0..out_dim {
                d_out[j] *= act.derivative(trace.pre[l][j], trace.out[l][j]);
            }

            // Through FiLM: dz = dh * scale; grads for Ws, Wb and the embedding.
            if spec.has_film(l) {
                let fd = spec.film_dim;
                let ws_off = base + (in_dim + 1) * out_dim;
                let wb_off = ws_off + out_dim * fd;
                let e = &trace.cond;
                for j in 0..out_dim {
                    let dh = d_out[j];
                    let ds = dh * trace.z[l][j];
                    if trace.has_cond {
                        let gs_row = &mut param_grads[ws_off + j * fd..ws_off + (j + 1) * fd];
                        for (g, &ek) in gs_row.iter_mut().zip(e.iter()) {
                            *g = ds.mul_add(ek, *g);
                        }
                        let gb_row = &mut param_grads[wb_off + j * fd..wb_off + (j + 1) * fd];
                        for (g, &ek) in gb_row.iter_mut().zip(e.iter()) {
                            *g = dh.mul_add(ek, *g);
                        }
                        if let Some(ref mut cg) = cond_grad {
                            let srow = &params[ws_off + j * fd..ws_off + (j + 1) * fd];
                            let brow = &params[wb_off + j * fd..wb_off + (j + 1) * fd];
                            for ((c, &si), &bi) in cg.iter_mut().zip(srow.iter()).zip(brow.iter()) {
                                *c += si * ds + bi * dh;
                            }
                        }
                    }
                    d_out[j] = dh * trace.scale[l][j];
                }
            }

            // Affine grads and gradient w.r.t. this layer's input.
            let skip_here = spec.output_skip && l + 1 == spec.layers.len();
            let x: &[f64] = if skip_here {
                &trace.concat
            } else if l == 0 {
                &trace.input
            } else {
                &trace.out[l - 1]
            };
            let w = &params[base..base + out_dim * in_dim];
            let gb_off = base + out_dim * in_dim;
            let dp = &mut d_prev[..in_dim];
            dp.fill(0.0);
            for j in 0..out_dim {
                let dz = d_out[j];
                param_grads[gb_off + j] += dz;
                let row = &w[j * in_dim..(j + 1) * in_dim];
                let grow = &mut param_grads[base + j * in_dim..base + (j + 1) * in_dim];
                for ((g, &xi), (&wi, d)) in grow
                    .iter_mut()
                    .zip(x.iter())
                    .zip(row.iter().zip(dp.iter_mut()))
                {
                    *g = dz.mul_add(xi, *g);
                    *d = wi.mul_add(dz, *d);
                }
            }

            if skip_here {
                // The tail of d_prev belongs to the raw input; the head keeps
                // flowing to the previous layer.
                let prev_width = in_dim - spec.input;
                if let Some(ref mut ig) = input_grad {
                    for i in 0..spec.input {
                        ig[i] += d_prev[prev_width + i];
                    }
                }
            }
            if l == 0 {
                if let Some(ref mut ig) = input_grad {
                    for i in 0..spec.input {
                        ig[i] += d_prev[i];
                    }
                }
            }
            current_is_a = !current_is_a;
        }
        Ok(())
    }
}

/// Sinusoidal positional embedding for integer timesteps.
pub fn sinusoidal_embedding(step: usize, dim: usize, out: &mut [f64]) {
    assert_eq!(out.len(), dim);
    assert!(dim % 2 == 0, "sinusoidal embedding dim must be even");
    let half = dim / 2;
    for k in 0..half {
        let freq = (10_000f64).powf(-(k as f64) / half as f64);
        let angle = step as f64 * freq;
        out[2 * k] = angle.sin();
        out[2 * k + 1] = angle.cos();
    }
}

/// Checkpoint serialization lives in [`checkpoint`]; these are re-exported
/// writer/reader helpers for composite formats that embed a ParamSet.
pub fn write_param_set(w: &mut impl Write, set: &ParamSet, ema: Option<&[f64]>) -> Result<()> {
    checkpoint::write_body(w, set, ema)
}

pub fn read_param_set(r: &mut impl Read) -> Result<(ParamSet, Option<Vec<f64>>)> {
    checkpoint::read_body(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn gradcheck_net(seed: u64, spec: MlpSpec) {
        let mut rng = stream(seed, Domain::Init, 0);
        let manifest = Manifest::new(vec![Block::Mlp(spec.clone())]);
        let n = manifest.param_count();
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            params.push(rng.gen_range(-0.8..0.8));
        }
        let mut input = Vec::with_capacity(spec.input);
        for _ in 0..spec.input {
            input.push(rng.gen_range(-1.0..1.0));
        }
        let cond: Option<Vec<f64>> = if spec.film_dim > 0 {
            Some(
                (0..spec.film_dim)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect(),
            )
        } else {
            None
        };

        let mlp = Mlp::new(spec.clone());
        let mut trace = mlp.make_trace();

        // L = ||y||^2 / 2  =>  dL/dy = y
        let loss = |params: &[f64], trace: &mut Trace| -> f64 {
            let y = mlp.forward(params, &input, cond.as_deref(), trace).unwrap();
            0.5 * y.iter().map(|v| v * v).sum::<f64>()
        };

        let y = mlp
            .forward(&params, &input, cond.as_deref(), &mut trace)
            .unwrap()
            .to_vec();
        let mut grads = vec![0.0; n];
        let mut input_grad = vec![0.0; spec.input];
        let mut cond_grad = vec![0.0; spec.film_dim];
        mlp.backward(
            &params,
            &mut trace,
            &y,
            &mut grads,
            Some(&mut input_grad),
            Some(&mut cond_grad),
        )
        .unwrap();

        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut probe = params.clone();
        for p in 0..n {
            probe[p] = params[p] + h;
            let up = loss(&probe, &mut trace);
            probe[p] = params[p] - h;
            let down = loss(&probe, &mut trace);
            probe[p] = params[p];
            let numeric = (up - down) / (2.0 * h);
            let denom = grads[p].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((grads[p] - numeric).abs() / denom);
        }
        assert!(worst < 1e-4, "max relative gradient error {worst}");
    }

    #[test]
    fn zero_weight_network_outputs_zero() {
        let spec = MlpSpec::new(3, vec![(4, Activation::Tanh), (2, Activation::Linear)], 0);
        let mlp = Mlp::new(spec.clone());
        let params = vec![0.0; spec.param_count()];
        let mut trace = mlp.make_trace();
        let y = mlp
            .forward(&params, &[1.0, -2.0, 0.5], None, &mut trace)
            .unwrap();
        assert_eq!(y, &[0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer() {
        let spec = MlpSpec::new(2, vec![(2, Activation::Linear)], 0);
        let mlp = Mlp::new(spec.clone());
        // Row-major W = I, b = 0.
        let params = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let mut trace = mlp.make_trace();
        let y = mlp.forward(&params, &[1.0, 2.0], None, &mut trace).unwrap();
        assert_eq!(y, &[1.0, 2.0]);
    }

    #[test]
    fn two_layer_tanh_matches_straight_line_arithmetic() {
        // Independent recomputation of the composed affine+tanh maps.
        let spec = MlpSpec::new(2, vec![(3, Activation::Tanh), (2, Activation::Linear)], 0);
        let manifest = Manifest::new(vec![Block::Mlp(spec.clone())]);
        let mut rng = stream(42, Domain::Init, 0);
        let set = ParamSet::init(manifest, &mut rng);
        let mlp = Mlp::new(spec);
        let mut trace = mlp.make_trace();
        let x = [0.5, -0.5];
        let y = mlp.forward(&set.values, &x, None, &mut trace).unwrap();

        let p = &set.values;
        // Layer 1: W1 (3x2) at p[0..6], b1 at p[6..9].
        let mut h = [0.0f64; 3];
        for j in 0..3 {
            h[j] = (p[j * 2] * x[0] + p[j * 2 + 1] * x[1] + p[6 + j]).tanh();
        }
        // Layer 2: W2 (2x3) at p[9..15], b2 at p[15..17].
        let mut expect = [0.0f64; 2];
        for j in 0..2 {
            expect[j] =
                p[9 + j * 3] * h[0] + p[9 + j * 3 + 1] * h[1] + p[9 + j * 3 + 2] * h[2] + p[15 + j];
        }
        for j in 0..2 {
            assert!((y[j] - expect[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_linear_backward_is_product_rule() {
        // y = w*x with w = 2, x = 3, dL/dy = 1 -> dL/dw = 3, dL/dx = 2.
        let spec = MlpSpec::new(1, vec![(1, Activation::Linear)], 0);
        let mlp = Mlp::new(spec.clone());
        let params = vec![2.0, 0.0];
        let mut trace = mlp.make_trace();
        mlp.forward(&params, &[3.0], None, &mut trace).unwrap();
        let mut grads = vec![0.0; 2];
        let mut input_grad = vec![0.0; 1];
        mlp.backward(
            &params,
            &mut trace,
            &[1.0],
            &mut grads,
            Some(&mut input_grad),
            None,
        )
        .unwrap();
        assert_eq!(grads[0], 3.0);
        assert_eq!(input_grad[0], 2.0);
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let spec = MlpSpec::new(3, vec![(5, Activation::Silu), (2, Activation::Linear)], 4);
        let mut rng = stream(9, Domain::Init, 0);
        let set = ParamSet::init(Manifest::new(vec![Block::Mlp(spec.clone())]), &mut rng);
        let mlp = Mlp::new(spec.clone());
        let mut trace = mlp.make_trace();
        let cond = vec![0.3, -0.2, 0.9, 0.1];
        mlp.forward(&set.values, &[0.1, 0.2, 0.3], Some(&cond), &mut trace)
            .unwrap();
        let mut grads = vec![0.0; spec.param_count()];
        mlp.backward(&set.values, &mut trace, &[0.0, 0.0], &mut grads, None, None)
            .unwrap();
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradients_match_central_differences() {
        gradcheck_net(
            1,
            MlpSpec::new(4, vec![(8, Activation::Tanh), (3, Activation::Linear)], 0),
        );
        gradcheck_net(
            2,
            MlpSpec::new(
                5,
                vec![
                    (16, Activation::Silu),
                    (16, Activation::Silu),
                    (4, Activation::Linear),
                ],
                6,
            ),
        );
        gradcheck_net(
            3,
            MlpSpec::new(
                2,
                vec![
                    (12, Activation::Tanh),
                    (12, Activation::Tanh),
                    (1, Activation::Linear),
                ],
                3,
            ),
        );
        gradcheck_net(4, MlpSpec::new(6, vec![(2, Activation::Linear)], 0));
        gradcheck_net(
            5,
            MlpSpec::new(3, vec![(10, Activation::Silu), (5, Activation::Linear)], 8),
        );
        gradcheck_net(
            6,
            MlpSpec::new(4, vec![(6, Activation::Silu), (4, Activation::Linear)], 5)
                .with_output_skip(),
        );
        gradcheck_net(
            7,
            MlpSpec::new(
                5,
                vec![
                    (8, Activation::Tanh),
                    (8, Activation::Silu),
                    (3, Activation::Linear),
                ],
                0,
            )
            .with_output_skip(),
        );
        gradcheck_net(
            8,
            MlpSpec::new(4, vec![(7, Activation::Silu), (4, Activation::Linear)], 6)
                .with_output_skip()
                .with_film_output(),
        );
    }

    #[test]
    fn film_with_zero_embedding_is_identity() {
        let spec = MlpSpec::new(3, vec![(6, Activation::Silu), (2, Activation::Linear)], 4);
        let mut rng = stream(77, Domain::Init, 0);
        let mut set = ParamSet::init(Manifest::new(vec![Block::Mlp(spec.clone())]), &mut rng);
        // Randomize film projections too, so identity is not trivial.
        for v in set.values.iter_mut() {
            if *v == 0.0 {
                *v = rng.gen_range(-0.4..0.4);
            }
        }
        let mlp = Mlp::new(spec.clone());
        let mut ta = mlp.make_trace();
        let mut tb = mlp.make_trace();
        let x = [0.2, -0.7, 1.1];
        let zero = vec![0.0; 4];
        let with_zero = mlp
            .forward(&set.values, &x, Some(&zero), &mut ta)
            .unwrap()
            .to_vec();
        let without = mlp
            .forward(&set.values, &x, None, &mut tb)
            .unwrap()
            .to_vec();
        assert_eq!(with_zero, without);
    }

    #[test]
    fn manifest_round_trip_is_byte_identical() {
        let manifest = Manifest::new(vec![
            Block::Table { rows: 4, cols: 16 },
            Block::Mlp(MlpSpec::new(
                48,
                vec![(32, Activation::Silu), (32, Activation::Linear)],
                0,
            )),
            Block::Mlp(MlpSpec::new(
                130,
                vec![
                    (64, Activation::Silu),
                    (64, Activation::Silu),
                    (130, Activation::Linear),
                ],
                32,
            )),
        ]);
        let bytes = manifest.encode();
        let back = Manifest::decode(&bytes).unwrap();
        assert_eq!(back, manifest);
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn sinusoidal_embedding_is_bounded_and_distinct() {
        let mut a = vec![0.0; 32];
        let mut b = vec![0.0; 32];
        sinusoidal_embedding(8, 32, &mut a);
        sinusoidal_embedding(22, 32, &mut b);
        assert!(a.iter().all(|v| v.abs() <= 1.0));
        assert_ne!(a, b);
    }
}
