//! Score-matching motion priors on a desk-scale planar gait environment.
//!
//! The crate trains a small motion diffusion model on procedurally generated
//! gait data, freezes it, and reuses it as a stationary reward model and
//! initial-state generator for PPO control policies:
//!
//! - [`nn`] — flat-parameter MLPs with FiLM conditioning, Adam, EMA,
//!   checkpoint files.
//! - [`diffusion`] — DDPM over motion windows: schedules, training,
//!   ancestral sampling, classifier-free guidance, style composition.
//! - [`prior`] — the frozen score-matching prior: ensembled, normalized
//!   denoising-error reward plus generative state initialization.
//! - [`env`] — deterministic planar gait character, task rewards, motion
//!   features, procedural reference datasets.
//! - [`ppo`] — vectorized on-policy training with GAE(λ) advantages and
//!   TD(λ) value targets.
//! - [`eval`] — DTW alignment, kernel MMD, gait style classification,
//!   ensemble-vs-random reward ablations.
//! - [`cli`] — the `smp` binary: `gen-data`, `train-prior`, `train-policy`,
//!   `eval`, `sample`.
//!
//! See `examples/` for one runnable program per capability.

pub mod cli;
pub mod config;
pub mod diffusion;
pub mod env;
pub mod error;
pub mod eval;
pub mod nn;
pub mod ppo;
pub mod prior;
pub mod rng;
mod wire;

pub use error::{Result, SmpError};
