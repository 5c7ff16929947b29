//! Command-line orchestration.
//!
//! One process per command: `gen-data`, `train-prior`, `train-policy`,
//! `eval`, `sample`. Every run writes its resolved configuration (including
//! the seed) next to its artifacts. Exit codes: 0 success, 2 configuration
//! error, 3 runtime or training error.

use std::path::{Path, PathBuf};

use crate::config::{render_echo, ConfigMap};
use crate::diffusion::{
    limb_split_masks, sample_reverse_directed, train_prior, DenoiserModel, EpsPredictor,
    StyleDirective, TrainPriorConfig,
};
use crate::env::dataset::{generate_gait_dataset, load_dataset, save_dataset, DataPreset};
use crate::env::features::{FEATURE_DIM, WINDOW_FRAMES};
use crate::env::{EnvParams, TaskConfig, TaskKind};
use crate::error::{Result, SmpError};
use crate::eval::{
    ablation_ensemble_vs_random, classify_trajectory, imitation_error, line_plot_svg, prior_report,
    sds_error_curve,
};
use crate::ppo::{PolicyTrainer, PpoConfig, TrainPolicyConfig};
use crate::prior::{PriorConfig, SmpPrior};
use crate::rng::{stream, Domain};

const USAGE: &str = "usage: smp <gen-data|train-prior|train-policy|eval|sample> \
--config FILE --out DIR [--seed N] [--set section.key=value]...";

/// Entry point for the binary; returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    match dispatch(args) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn dispatch(args: &[String]) -> Result<()> {
    let Some(command) = args.first() else {
        return Err(SmpError::Config(USAGE.into()));
    };
    let invocation = Invocation::parse(&args[1..])?;
    match command.as_str() {
        "gen-data" => cmd_gen_data(invocation),
        "train-prior" => cmd_train_prior(invocation),
        "train-policy" => cmd_train_policy(invocation),
        "eval" => cmd_eval(invocation),
        "sample" => cmd_sample(invocation),
        other => Err(SmpError::Config(format!(
            "unknown command '{other}'\n{USAGE}"
        ))),
    }
}

struct Invocation {
    config: ConfigMap,
    out_dir: PathBuf,
    seed: u64,
}

impl Invocation {
    fn parse(args: &[String]) -> Result<Invocation> {
        let mut config_path: Option<PathBuf> = None;
        let mut out_dir: Option<PathBuf> = None;
        let mut seed_flag: Option<u64> = None;
        let mut overrides: Vec<String> = Vec::new();
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let mut value = |name: &str| -> Result<String> {
                it.next()
                    .cloned()
                    .ok_or_else(|| SmpError::Config(format!("{name} needs a value\n{USAGE}")))
            };
            match arg.as_str() {
                "--config" => config_path = Some(PathBuf::from(value("--config")?)),
                "--out" => out_dir = Some(PathBuf::from(value("--out")?)),
                "--seed" => {
                    let v = value("--seed")?;
                    seed_flag = Some(
                        v.parse()
                            .map_err(|_| SmpError::Config(format!("bad --seed value '{v}'")))?,
                    );
                }
                "--set" => overrides.push(value("--set")?),
                other => {
                    return Err(SmpError::Config(format!(
                        "unknown argument '{other}'\n{USAGE}"
                    )))
                }
            }
        }
        let out_dir =
            out_dir.ok_or_else(|| SmpError::Config(format!("--out is required\n{USAGE}")))?;
        let mut config = match config_path {
            Some(path) => ConfigMap::load(&path)?,
            None => ConfigMap::default(),
        };
        for assignment in &overrides {
            config.set(assignment)?;
        }

        // Seed precedence: --seed flag, then SMP_SEED, then [run] seed.
        let mut run = config.section("run");
        let config_seed = run.u64_or("seed", 0)?;
        let env_seed = match std::env::var("SMP_SEED") {
            Ok(v) => Some(
                v.parse::<u64>()
                    .map_err(|_| SmpError::Config(format!("bad SMP_SEED value '{v}'")))?,
            ),
            Err(_) => None,
        };
        let seed = seed_flag.or(env_seed).unwrap_or(config_seed);
        Ok(Invocation {
            config,
            out_dir,
            seed,
        })
    }

    fn prepare_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        Ok(())
    }

    fn write_echo(&self, entries: &[(&str, Vec<(String, String)>)]) -> Result<()> {
        let mut all = vec![("run", vec![("seed".to_string(), self.seed.to_string())])];
        all.extend(entries.iter().cloned());
        std::fs::write(self.out_dir.join("config.txt"), render_echo(&all))?;
        Ok(())
    }
}

fn kv(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

fn env_params_from(cfg: &mut ConfigMap) -> Result<(EnvParams, Vec<(String, String)>)> {
    let mut env = cfg.section("env");
    let d = EnvParams::default();
    let params = EnvParams {
        dt: d.dt,
        mass: d.mass,
        force_max: env.f64_or("force_max", d.force_max)?,
        drag: env.f64_or("drag", d.drag)?,
        turn_torque_max: env.f64_or("turn_torque_max", d.turn_torque_max)?,
        turn_damp: env.f64_or("turn_damp", d.turn_damp)?,
        limb_torque_max: env.f64_or("limb_torque_max", d.limb_torque_max)?,
        limb_spring: env.f64_or("limb_spring", d.limb_spring)?,
        limb_damp: env.f64_or("limb_damp", d.limb_damp)?,
        limb_len: env.f64_or("limb_len", d.limb_len)?,
        speed_cap: env.f64_or("speed_cap", d.speed_cap)?,
        episode_len: env.u32_or("episode_len", d.episode_len)?,
    };
    let echo = vec![
        kv("force_max", params.force_max),
        kv("drag", params.drag),
        kv("turn_torque_max", params.turn_torque_max),
        kv("turn_damp", params.turn_damp),
        kv("limb_torque_max", params.limb_torque_max),
        kv("limb_spring", params.limb_spring),
        kv("limb_damp", params.limb_damp),
        kv("limb_len", params.limb_len),
        kv("speed_cap", params.speed_cap),
        kv("episode_len", params.episode_len),
    ];
    Ok((params, echo))
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

fn cmd_gen_data(mut inv: Invocation) -> Result<()> {
    let (env, env_echo) = env_params_from(&mut inv.config)?;
    let mut data = inv.config.section("data");
    let preset_name = data.str_or("preset", "styles");
    let preset = match DataPreset::parse(&preset_name)? {
        DataPreset::Styles {
            clips_per_style,
            clip_seconds,
            speed_range,
        } => DataPreset::Styles {
            clips_per_style: data.usize_or("clips_per_style", clips_per_style)?,
            clip_seconds: data.f64_or("clip_seconds", clip_seconds)?,
            speed_range: (
                data.f64_or("speed_min", speed_range.0)?,
                data.f64_or("speed_max", speed_range.1)?,
            ),
        },
        DataPreset::WalkJogRun => DataPreset::WalkJogRun,
        DataPreset::SingleClip {
            speed,
            clip_seconds,
        } => DataPreset::SingleClip {
            speed: data.f64_or("speed", speed)?,
            clip_seconds: data.f64_or("clip_seconds", clip_seconds)?,
        },
    };
    inv.config.ensure_consumed()?;
    inv.prepare_out()?;

    let mut rng = stream(inv.seed, Domain::Data, 0);
    let dataset = generate_gait_dataset(&env, &preset, &mut rng);
    save_dataset(&inv.out_dir.join("dataset.smpd"), &dataset)?;
    std::fs::write(
        inv.out_dir.join("metrics.csv"),
        format!(
            "clips,windows\n{},{}\n",
            dataset.clips.len(),
            dataset.windows.len()
        ),
    )?;

    let mut data_echo = vec![kv("preset", &preset_name)];
    if let DataPreset::Styles {
        clips_per_style,
        clip_seconds,
        speed_range,
    } = &preset
    {
        data_echo.push(kv("clips_per_style", clips_per_style));
        data_echo.push(kv("clip_seconds", clip_seconds));
        data_echo.push(kv("speed_min", speed_range.0));
        data_echo.push(kv("speed_max", speed_range.1));
    }
    if let DataPreset::SingleClip {
        speed,
        clip_seconds,
    } = &preset
    {
        data_echo.push(kv("speed", speed));
        data_echo.push(kv("clip_seconds", clip_seconds));
    }
    inv.write_echo(&[("data", data_echo), ("env", env_echo)])?;
    println!(
        "wrote {} windows from {} clips to {}",
        dataset.windows.len(),
        dataset.clips.len(),
        inv.out_dir.join("dataset.smpd").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train-prior
// ---------------------------------------------------------------------------

fn cmd_train_prior(mut inv: Invocation) -> Result<()> {
    let mut prior = inv.config.section("prior");
    let Some(dataset_path) = prior.take("dataset") else {
        return Err(SmpError::Config(
            "train-prior needs [prior] dataset = <path>".into(),
        ));
    };
    let defaults = TrainPriorConfig::default();
    let cfg = TrainPriorConfig {
        steps: prior.usize_or("steps", defaults.steps)?,
        batch: prior.usize_or("batch", defaults.batch)?,
        lr: prior.f64_or("lr", defaults.lr)?,
        ema_decay: prior.f64_or("ema_decay", defaults.ema_decay)?,
        cond_dropout: prior.f64_or("cond_dropout", defaults.cond_dropout)?,
        hidden: prior.usize_list_or("hidden", &defaults.hidden)?,
        film_dim: prior.usize_or("film_dim", defaults.film_dim)?,
        time_embed_dim: prior.usize_or("time_embed_dim", defaults.time_embed_dim)?,
        style_embed_dim: prior.usize_or("style_embed_dim", defaults.style_embed_dim)?,
        diffusion_steps: prior.usize_or("diffusion_steps", defaults.diffusion_steps)?,
        divergence_factor: defaults.divergence_factor,
        divergence_patience: defaults.divergence_patience,
        log_every: prior.usize_or("log_every", defaults.log_every)?,
        holdout_every: prior.usize_or("holdout_every", defaults.holdout_every)?,
    };
    inv.config.ensure_consumed()?;
    inv.prepare_out()?;

    let dataset = load_dataset(Path::new(&dataset_path))?;
    let (model, log) = train_prior(&dataset, &cfg, inv.seed)?;
    model.save(&inv.out_dir.join("prior.smpl"))?;

    let mut csv = String::from("step,loss\n");
    for (step, loss) in &log.entries {
        csv.push_str(&format!("{step},{loss}\n"));
    }
    std::fs::write(inv.out_dir.join("metrics.csv"), csv)?;

    inv.write_echo(&[(
        "prior",
        vec![
            kv("dataset", &dataset_path),
            kv("steps", cfg.steps),
            kv("batch", cfg.batch),
            kv("lr", cfg.lr),
            kv("ema_decay", cfg.ema_decay),
            kv("cond_dropout", cfg.cond_dropout),
            kv(
                "hidden",
                cfg.hidden
                    .iter()
                    .map(|h| h.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            kv("film_dim", cfg.film_dim),
            kv("time_embed_dim", cfg.time_embed_dim),
            kv("style_embed_dim", cfg.style_embed_dim),
            kv("diffusion_steps", cfg.diffusion_steps),
            kv("log_every", cfg.log_every),
            kv("holdout_every", cfg.holdout_every),
        ],
    )])?;
    println!(
        "trained prior: loss {:.3} -> {:.3}, saved to {}",
        log.initial_loss,
        log.final_loss,
        inv.out_dir.join("prior.smpl").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train-policy
// ---------------------------------------------------------------------------

fn parse_directive(
    section: &mut crate::config::SectionReader<'_>,
    model: &DenoiserModel,
) -> Result<(StyleDirective, Vec<(String, String)>)> {
    let style_name = section.take("style");
    let compose = section.take("compose");
    let w_cfg = section.f64_or("w_cfg", 1.0)?;
    let mut echo = Vec::new();
    let resolve = |name: &str| -> Result<usize> {
        model
            .style_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| SmpError::Config(format!("prior has no style named '{name}'")))
    };
    let directive = match (style_name, compose) {
        (None, None) => StyleDirective::Unconditional,
        (Some(name), None) => {
            echo.push(kv("style", &name));
            echo.push(kv("w_cfg", w_cfg));
            StyleDirective::Cfg {
                style: resolve(&name)?,
                w_cfg,
            }
        }
        (None, Some(pair)) => {
            let Some((a, b)) = pair.split_once('+') else {
                return Err(SmpError::Config(format!(
                    "compose must look like 'styleA+styleB', got '{pair}'"
                )));
            };
            echo.push(kv("compose", &pair));
            let (mask_a, mask_b) = limb_split_masks(model.config.window_frames);
            StyleDirective::Composed {
                style_a: resolve(a.trim())?,
                style_b: resolve(b.trim())?,
                mask_a,
                mask_b,
            }
        }
        (Some(_), Some(_)) => {
            return Err(SmpError::Config(
                "give either style or compose, not both".into(),
            ))
        }
    };
    directive.validate(model.config.style_count, model.window_dim())?;
    Ok((directive, echo))
}

fn task_config_from(
    kind: TaskKind,
    section: &mut crate::config::SectionReader<'_>,
) -> Result<TaskConfig> {
    let d = TaskConfig::new(kind);
    Ok(TaskConfig {
        kind,
        speed_range: (
            section.f64_or("speed_min", d.speed_range.0)?,
            section.f64_or("speed_max", d.speed_range.1)?,
        ),
        speed_resample_steps: section.u32_or("speed_resample_steps", d.speed_resample_steps)?,
        loc_spawn_dist: (
            section.f64_or("loc_spawn_min", d.loc_spawn_dist.0)?,
            section.f64_or("loc_spawn_max", d.loc_spawn_dist.1)?,
        ),
        arrive_radius: section.f64_or("arrive_radius", d.arrive_radius)?,
        arrive_hold_steps: section.u32_or("arrive_hold_steps", d.arrive_hold_steps)?,
        loc_bound: section.f64_or("loc_bound", d.loc_bound)?,
    })
}

fn cmd_train_policy(mut inv: Invocation) -> Result<()> {
    let (env, env_echo) = env_params_from(&mut inv.config)?;
    let mut policy = inv.config.section("policy");

    // Modularity contract: policy training never reads reference data. A
    // prior checkpoint is the only motion input allowed here.
    let dataset_key = policy.take("dataset");
    let prior_path = policy.take("prior");
    if let Some(dataset) = dataset_key {
        let reason = if prior_path.is_some() {
            "policy training with a prior must not receive the reference dataset"
        } else {
            "policy training takes no dataset; train a prior first or set w_prior = 0"
        };
        return Err(SmpError::Config(format!(
            "{reason} (got dataset = {dataset})"
        )));
    }

    let task_name = policy.str_or("task", "target-speed");
    let kind = TaskKind::parse(&task_name)?;
    let task = task_config_from(kind, &mut policy)?;

    let d = PpoConfig::default();
    let ppo = PpoConfig {
        gamma: policy.f64_or("gamma", d.gamma)?,
        lam: policy.f64_or("lambda", d.lam)?,
        clip: policy.f64_or("clip", d.clip)?,
        lr: policy.f64_or("lr", d.lr)?,
        envs: policy.usize_or("envs", d.envs)?,
        horizon: policy.usize_or("horizon", d.horizon)?,
        epochs: policy.usize_or("epochs", d.epochs)?,
        minibatch: policy.usize_or("minibatch", d.minibatch)?,
        entropy_coef: policy.f64_or("entropy_coef", d.entropy_coef)?,
        w_prior: policy.f64_or("w_prior", d.w_prior)?,
        w_g: policy.f64_or("w_g", d.w_g)?,
        kl_limit: policy.f64_or("kl_limit", d.kl_limit)?,
        grad_clip: policy.f64_or("grad_clip", d.grad_clip)?,
        hidden: policy.usize_list_or("hidden", &d.hidden)?,
        use_gsi: match policy.str_or("use_gsi", "auto").as_str() {
            "auto" => None,
            "true" => Some(true),
            "false" => Some(false),
            other => {
                return Err(SmpError::Config(format!(
                    "use_gsi must be auto, true, or false, got '{other}'"
                )))
            }
        },
        threads: policy.usize_or("threads", d.threads)?,
        spawn_half_extent: policy.f64_or("spawn_half_extent", d.spawn_half_extent)?,
    };
    let run_cfg = TrainPolicyConfig {
        iterations: policy.usize_or("iterations", 300)?,
        eval_every: policy.usize_or("eval_every", 50)?,
        eval_episodes: policy.usize_or("eval_episodes", 8)?,
    };
    let w_s = policy.f64_or("w_s", PriorConfig::default().w_s)?;
    let mean_decay = policy.f64_or("mean_decay", 0.999)?;
    let resume = policy.take("resume");

    let (prior, directive_echo) = match &prior_path {
        Some(path) => {
            let model = DenoiserModel::load(Path::new(path))?;
            let (directive, echo) = parse_directive(&mut policy, &model)?;
            let prior = SmpPrior::new(
                model,
                directive,
                PriorConfig {
                    w_s,
                    mean_decay,
                    ..PriorConfig::default()
                },
            )?;
            (Some(prior), echo)
        }
        None => {
            if ppo.w_prior > 0.0 {
                return Err(SmpError::Config(
                    "w_prior > 0 needs [policy] prior = <checkpoint>; set w_prior = 0 for the \
                     task-only baseline"
                        .into(),
                ));
            }
            (None, Vec::new())
        }
    };
    inv.config.ensure_consumed()?;
    inv.prepare_out()?;

    let mut trainer = match &resume {
        Some(path) => PolicyTrainer::load(Path::new(path), prior)?,
        None => PolicyTrainer::new(env, task, ppo, prior, inv.seed)?,
    };

    let mut policy_echo = vec![
        kv("task", &task_name),
        kv("iterations", run_cfg.iterations),
        kv("eval_every", run_cfg.eval_every),
        kv("eval_episodes", run_cfg.eval_episodes),
        kv("gamma", trainer.ppo.gamma),
        kv("lambda", trainer.ppo.lam),
        kv("clip", trainer.ppo.clip),
        kv("lr", trainer.ppo.lr),
        kv("envs", trainer.ppo.envs),
        kv("horizon", trainer.ppo.horizon),
        kv("epochs", trainer.ppo.epochs),
        kv("minibatch", trainer.ppo.minibatch),
        kv("entropy_coef", trainer.ppo.entropy_coef),
        kv("w_prior", trainer.ppo.w_prior),
        kv("w_g", trainer.ppo.w_g),
        kv("w_s", w_s),
        kv("mean_decay", mean_decay),
    ];
    if let Some(path) = &prior_path {
        policy_echo.push(kv("prior", path));
    }
    if let Some(path) = &resume {
        policy_echo.push(kv("resume", path));
    }
    policy_echo.extend(directive_echo);
    let echo_text = render_echo(&[
        ("policy", policy_echo.clone()),
        ("env", env_echo.clone()),
        ("run", vec![kv("seed", inv.seed)]),
    ]);

    let mut rows = Vec::new();
    trainer.run(&run_cfg, &mut rows)?;

    let k_steps: Vec<usize> = trainer
        .prior
        .as_ref()
        .map(|p| p.timesteps().to_vec())
        .unwrap_or_default();
    crate::ppo::train::write_metrics_csv(&inv.out_dir.join("metrics.csv"), &rows, &k_steps)?;
    trainer.save(&inv.out_dir.join("trainer.smpl"), &echo_text)?;
    trainer.save_policy(&inv.out_dir.join("policy.smpl"), &echo_text)?;
    inv.write_echo(&[("policy", policy_echo), ("env", env_echo)])?;

    let final_eval = trainer.eval_task_return(run_cfg.eval_episodes.max(1), u64::MAX)?;
    println!(
        "trained policy for {} iterations ({} env steps); eval task return {:.3}",
        trainer.iter, trainer.env_steps, final_eval
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn cmd_eval(mut inv: Invocation) -> Result<()> {
    let (env, _env_echo) = env_params_from(&mut inv.config)?;
    let mut eval = inv.config.section("eval");
    let mode = eval.str_or("mode", "prior");
    match mode.as_str() {
        "prior" => {
            let prior_path = require(&mut eval, "prior")?;
            let dataset_path = require(&mut eval, "dataset")?;
            let samples = eval.usize_or("samples", 256)?;
            let reward_draws = eval.usize_or("reward_draws", 1000)?;
            let holdout_every = eval.usize_or("holdout_every", 10)?;
            let plot = eval.bool_or("plot", true)?;
            inv.config.ensure_consumed()?;
            inv.prepare_out()?;

            let model = DenoiserModel::load(Path::new(&prior_path))?;
            let dataset = load_dataset(Path::new(&dataset_path))?;
            let report = prior_report(
                &model,
                &dataset,
                holdout_every,
                samples,
                reward_draws,
                inv.seed,
            )?;

            let mut csv = String::from("metric,value\n");
            csv.push_str(&format!("mmd_model,{}\n", report.mmd_model));
            csv.push_str(&format!("mmd_normal,{}\n", report.mmd_normal));
            for (name, acc) in &report.style_accuracy {
                csv.push_str(&format!("style_accuracy_{name},{acc}\n"));
            }
            csv.push_str(&format!(
                "mean_reward_dataset,{}\n",
                report.mean_reward_dataset
            ));
            csv.push_str(&format!(
                "mean_reward_perturbed,{}\n",
                report.mean_reward_perturbed
            ));
            csv.push_str(&format!("mean_reward_noise,{}\n", report.mean_reward_noise));
            std::fs::write(inv.out_dir.join("report.csv"), csv)?;

            if plot {
                let curve = sds_error_curve(&model, &dataset, holdout_every, 64, inv.seed)?;
                let data: Vec<(f64, f64)> = curve
                    .iter()
                    .map(|&(i, e, _)| (i as f64, e.log10()))
                    .collect();
                let pert: Vec<(f64, f64)> = curve
                    .iter()
                    .map(|&(i, _, e)| (i as f64, e.log10()))
                    .collect();
                line_plot_svg(
                    &inv.out_dir.join("sds_curve.svg"),
                    "denoising error vs timestep",
                    "diffusion timestep",
                    "log10 error",
                    &[("held-out", data), ("perturbed", pert)],
                )?;
            }
            inv.write_echo(&[(
                "eval",
                vec![
                    kv("mode", &mode),
                    kv("prior", &prior_path),
                    kv("dataset", &dataset_path),
                    kv("samples", samples),
                    kv("reward_draws", reward_draws),
                    kv("holdout_every", holdout_every),
                ],
            )])?;
            println!(
                "prior report: mmd {:.5} vs normal {:.5}; rewards {:.3}/{:.3}/{:.3}",
                report.mmd_model,
                report.mmd_normal,
                report.mean_reward_dataset,
                report.mean_reward_perturbed,
                report.mean_reward_noise
            );
        }
        "policy" => {
            let trainer_path = require(&mut eval, "trainer")?;
            let prior_path = eval.take("prior");
            let episodes = eval.usize_or("episodes", 16)?;
            let reference_speed = eval.f64_or("reference_speed", 2.0)?;
            let with_dtw = eval.bool_or("imitation_error", false)?;
            inv.config.ensure_consumed()?;
            inv.prepare_out()?;

            let prior = match &prior_path {
                Some(path) => {
                    let model = DenoiserModel::load(Path::new(path))?;
                    Some(SmpPrior::new(
                        model,
                        StyleDirective::Unconditional,
                        PriorConfig::default(),
                    )?)
                }
                None => None,
            };
            let trainer = PolicyTrainer::load(Path::new(&trainer_path), prior)?;
            let episodes_data = trainer.evaluate(episodes, u64::MAX - 1)?;

            let reference = if with_dtw {
                Some(crate::env::dataset::synth_clip(
                    &env,
                    &crate::env::dataset::ClipMeta {
                        style: 0,
                        speed: reference_speed,
                        duration: env.episode_len as f64 * env.dt,
                        phase0: 0.0,
                        turn_rate: 0.0,
                    },
                ))
            } else {
                None
            };

            let mut csv =
                String::from("episode,task_return,style,limb1_freq,limb2_freq,dtw_error\n");
            for (k, ep) in episodes_data.iter().enumerate() {
                let verdict = classify_trajectory(&ep.states, 1.0 / env.dt);
                let dtw = reference
                    .as_ref()
                    .map(|r| imitation_error(&env, &ep.states, r).to_string())
                    .unwrap_or_default();
                csv.push_str(&format!(
                    "{k},{},{},{},{},{dtw}\n",
                    ep.task_return,
                    trainer
                        .prior
                        .as_ref()
                        .map(|p| p.model().style_names[verdict.style].clone())
                        .unwrap_or_else(|| verdict.style.to_string()),
                    verdict.limbs[0].frequency,
                    verdict.limbs[1].frequency,
                ));
            }
            std::fs::write(inv.out_dir.join("report.csv"), csv)?;
            inv.write_echo(&[(
                "eval",
                vec![
                    kv("mode", &mode),
                    kv("trainer", &trainer_path),
                    kv("episodes", episodes),
                ],
            )])?;
            let mean: f64 = episodes_data.iter().map(|e| e.task_return).sum::<f64>()
                / episodes_data.len().max(1) as f64;
            println!("policy eval: mean task return {mean:.3} over {episodes} episodes");
        }
        "ablation" => {
            let prior_path = require(&mut eval, "prior")?;
            let dataset_path = require(&mut eval, "dataset")?;
            let trials = eval.usize_or("trials", 100)?;
            let windows = eval.usize_or("windows", 100)?;
            inv.config.ensure_consumed()?;
            inv.prepare_out()?;

            let model = DenoiserModel::load(Path::new(&prior_path))?;
            let dataset = load_dataset(Path::new(&dataset_path))?;
            let dim = model.window_dim();
            let step = (dataset.windows.len() / windows).max(1);
            let windows_z: Vec<Vec<f64>> = dataset
                .windows
                .iter()
                .step_by(step)
                .take(windows)
                .map(|w| {
                    let mut z = vec![0.0; dim];
                    model.normalize(w, &mut z);
                    z
                })
                .collect();
            let mut rng = stream(inv.seed, Domain::Reward, 31);
            let report = ablation_ensemble_vs_random(
                &model,
                &StyleDirective::Unconditional,
                &windows_z,
                trials,
                &mut rng,
            )?;
            let mut csv = String::from("window,std_ensemble,std_random\n");
            for (k, (se, sr)) in report
                .std_ensemble
                .iter()
                .zip(report.std_random.iter())
                .enumerate()
            {
                csv.push_str(&format!("{k},{se},{sr}\n"));
            }
            csv.push_str(&format!(
                "summary,{},{}\n",
                report.mean_reward_ensemble, report.mean_reward_random
            ));
            csv.push_str(&format!(
                "ensemble_lower_fraction,{},\n",
                report.ensemble_lower_fraction
            ));
            std::fs::write(inv.out_dir.join("report.csv"), csv)?;
            inv.write_echo(&[(
                "eval",
                vec![
                    kv("mode", &mode),
                    kv("prior", &prior_path),
                    kv("dataset", &dataset_path),
                    kv("trials", trials),
                    kv("windows", windows),
                ],
            )])?;
            println!(
                "ablation: ensemble std lower on {:.0}% of windows",
                100.0 * report.ensemble_lower_fraction
            );
        }
        "sds-curve" => {
            let prior_path = require(&mut eval, "prior")?;
            let dataset_path = require(&mut eval, "dataset")?;
            let draws = eval.usize_or("draws_per_step", 64)?;
            let holdout_every = eval.usize_or("holdout_every", 10)?;
            inv.config.ensure_consumed()?;
            inv.prepare_out()?;
            let model = DenoiserModel::load(Path::new(&prior_path))?;
            let dataset = load_dataset(Path::new(&dataset_path))?;
            let curve = sds_error_curve(&model, &dataset, holdout_every, draws, inv.seed)?;
            let mut csv = String::from("timestep,error_heldout,error_perturbed\n");
            for (i, a, b) in &curve {
                csv.push_str(&format!("{i},{a},{b}\n"));
            }
            std::fs::write(inv.out_dir.join("report.csv"), csv)?;
            let data: Vec<(f64, f64)> = curve
                .iter()
                .map(|&(i, e, _)| (i as f64, e.log10()))
                .collect();
            let pert: Vec<(f64, f64)> = curve
                .iter()
                .map(|&(i, _, e)| (i as f64, e.log10()))
                .collect();
            line_plot_svg(
                &inv.out_dir.join("sds_curve.svg"),
                "denoising error vs timestep",
                "diffusion timestep",
                "log10 error",
                &[("held-out", data), ("perturbed", pert)],
            )?;
            inv.write_echo(&[(
                "eval",
                vec![
                    kv("mode", &mode),
                    kv("prior", &prior_path),
                    kv("dataset", &dataset_path),
                ],
            )])?;
            println!("wrote SDS error curve over {} timesteps", curve.len());
        }
        other => {
            return Err(SmpError::Config(format!(
                "unknown eval mode '{other}' (prior, policy, ablation, sds-curve)"
            )))
        }
    }
    Ok(())
}

fn require(section: &mut crate::config::SectionReader<'_>, key: &str) -> Result<String> {
    section
        .take(key)
        .ok_or_else(|| SmpError::Config(format!("eval mode needs [eval] {key} = <path>")))
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

fn cmd_sample(mut inv: Invocation) -> Result<()> {
    let mut sample = inv.config.section("sample");
    let Some(prior_path) = sample.take("prior") else {
        return Err(SmpError::Config(
            "sample needs [sample] prior = <path>".into(),
        ));
    };
    let count = sample.usize_or("count", 16)?;
    let model = DenoiserModel::load(Path::new(&prior_path))?;
    let (directive, directive_echo) = parse_directive(&mut sample, &model)?;
    inv.config.ensure_consumed()?;
    inv.prepare_out()?;

    let mut rng = stream(inv.seed, Domain::Sampling, 0);
    let dim = model.window_dim();
    let mut raw = vec![0.0; dim];
    let mut csv = String::from("window,frame");
    for d in 0..FEATURE_DIM {
        csv.push_str(&format!(",f{d}"));
    }
    csv.push('\n');
    for w in 0..count {
        let z = sample_reverse_directed(&model, &directive, &mut rng)?;
        model.denormalize(&z, &mut raw);
        for frame in 0..WINDOW_FRAMES {
            csv.push_str(&format!("{w},{frame}"));
            for d in 0..FEATURE_DIM {
                csv.push_str(&format!(",{}", raw[frame * FEATURE_DIM + d]));
            }
            csv.push('\n');
        }
    }
    std::fs::write(inv.out_dir.join("windows.csv"), csv)?;
    std::fs::write(
        inv.out_dir.join("metrics.csv"),
        format!("windows\n{count}\n"),
    )?;
    let mut echo = vec![kv("prior", &prior_path), kv("count", count)];
    echo.extend(directive_echo);
    inv.write_echo(&[("sample", echo)])?;
    println!(
        "wrote {count} sampled windows to {}",
        inv.out_dir.join("windows.csv").display()
    );
    Ok(())
}
