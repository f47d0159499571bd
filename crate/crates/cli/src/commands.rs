use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sil_core::env::{generate_demos, write_demos, Actor, DemoSet};
use sil_core::eval::{bc_train, eval_reward, evaluate, EvalOptions};
use sil_core::sil::sil_train;
use sil_core::{EnvSpec, SilConfig};

use crate::checkpoint::{load_agent, save_agent, save_critic, save_value};
use crate::config::RunConfig;
use crate::rundir::{read_final, Diagnostics, FinalEval, RunDir, RunManifest, SCHEMA_VERSION, FINAL_EVAL_FILE};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sil,
    Ablation,
    Bc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sil => "sil",
            Method::Ablation => "ablation",
            Method::Bc => "bc",
        }
    }
}

/// Validated inputs shared by the training commands.
pub struct Prepared {
    pub env: EnvSpec,
    pub demos: DemoSet,
    pub reference: DemoSet,
    /// Demo count and run directory of every run.
    pub runs: Vec<(usize, PathBuf)>,
}

/// Checks the whole config and loads every input before any run starts.
pub fn prepare(config: &RunConfig, base: &Path) -> Result<Prepared, CliError> {
    let env = config.validate()?;
    let demos = config.demos.load(&env, base)?;
    let reference = match &config.reference_demos {
        Some(src) => src.load(&env, base)?,
        None => demos.clone(),
    };
    if reference.manifest.subsample_factor != demos.manifest.subsample_factor {
        return Err(CliError::Config("reference demos use a different subsample factor".into()));
    }
    let available = demos.trajectories.len();
    let runs = if config.demo_counts.is_empty() {
        vec![(available, config.out.clone())]
    } else {
        let mut runs = Vec::new();
        for &n in &config.demo_counts {
            if n > available {
                return Err(CliError::Config(format!("demo_counts asks for {n} demos, {available} available")));
            }
            runs.push((n, config.out.join(format!("demos_{n}"))));
        }
        runs
    };
    Ok(Prepared {
        env,
        demos,
        reference,
        runs,
    })
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn manifest(config: &RunConfig, method: Method, env: &EnvSpec, demos: &DemoSet) -> RunManifest {
    RunManifest {
        schema_version: SCHEMA_VERSION,
        version: crate::rundir::version_string(),
        method: method.name().into(),
        seed: config.seed,
        threads: config.threads,
        env: env.name().into(),
        demo_count: demos.trajectories.len(),
        demos: demos.manifest.clone(),
        metrics_header: sil_core::sil::METRICS_HEADER.into(),
    }
}

/// Sinkhorn metric against `reference` plus deterministic return.
pub fn final_eval<A: Actor + Clone + Send + Sync>(
    actor: &A,
    env: &EnvSpec,
    reference: &DemoSet,
    config: &RunConfig,
    method: &str,
    demo_count: usize,
) -> Result<FinalEval, CliError> {
    let opts = EvalOptions {
        episodes: config.final_eval_episodes,
        stochastic: true,
        settings: config.sil.eval_sinkhorn,
        absorbing: true,
    };
    Ok(FinalEval {
        method: method.into(),
        env: env.name().into(),
        demo_count,
        seed: config.seed,
        sinkhorn: evaluate(actor, env, Some(reference), &opts, config.seed)?,
        reward: eval_reward(actor, env, config.final_eval_episodes, config.seed, false)?,
    })
}

pub fn gen_expert(env_name: &str, count: usize, subsample_factor: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    let env = EnvSpec::by_name(env_name)?;
    if count == 0 || subsample_factor == 0 {
        return Err(CliError::Config("count and subsample factor must be >= 1".into()));
    }
    let demos = generate_demos(&env, count, subsample_factor, seed)?;
    write_demos(out, &demos.manifest, &demos.trajectories)?;
    Ok(())
}

/// Adversarial or fixed-cost training, one run directory per demo count.
pub fn train(config: &RunConfig, base: &Path, method: Method) -> Result<Vec<PathBuf>, CliError> {
    assert!(method != Method::Bc, "use train_bc");
    let prep = prepare(config, base)?;
    let pool = thread_pool(config.threads)?;
    let sil = SilConfig {
        fixed_cost: method == Method::Ablation,
        ..config.sil.clone()
    };
    let mut dirs = Vec::new();
    for (n, dir) in &prep.runs {
        let demos = prep.demos.take(*n)?;
        let mut run = RunDir::create(dir, config, &manifest(config, method, &prep.env, &demos))?;
        let started = Instant::now();
        let mut failure = None;
        let outcome = pool.install(|| {
            sil_train(&sil, &prep.env, &demos, config.seed, &mut |r| {
                let k = r.row.iter;
                let mut step = || -> Result<(), CliError> {
                    run.append_metrics(r.row)?;
                    run.append_timing(k, started.elapsed().as_secs_f64())?;
                    run.append_diagnostics(&Diagnostics {
                        iter: k,
                        identity_error: r.identity_error,
                        shaped_min: r.shaped_min,
                        shaped_max: r.shaped_max,
                        unconverged_pairs: r.unconverged_pairs,
                        critic_skipped: r.critic_skipped,
                    })?;
                    if config.checkpoint_every > 0 && k % config.checkpoint_every == 0 {
                        let dir = run.checkpoint_dir(Some(k));
                        save_agent(&dir, r.agent, k)?;
                        save_critic(&dir, r.critic, k)?;
                    }
                    Ok(())
                };
                step().map_err(|e| {
                    let msg = e.to_string();
                    failure = Some(e);
                    sil_core::Error::InvalidArgument(format!("writing run output: {msg}"))
                })
            })
        });
        let outcome = match (outcome, failure) {
            (_, Some(e)) => return Err(e),
            (r, None) => r?,
        };
        let k = outcome.rows.len();
        let last = run.checkpoint_dir(None);
        save_agent(&last, &outcome.agent, k)?;
        save_critic(&last, &outcome.critic, k)?;
        save_value(&last, &outcome.value, k)?;
        let report = pool.install(|| final_eval(&outcome.agent, &prep.env, &prep.reference, config, method.name(), *n))?;
        run.write_final(&report)?;
        dirs.push(run.root().to_path_buf());
    }
    Ok(dirs)
}

pub fn train_bc(config: &RunConfig, base: &Path) -> Result<Vec<PathBuf>, CliError> {
    let prep = prepare(config, base)?;
    let pool = thread_pool(config.threads)?;
    let mut dirs = Vec::new();
    for (n, dir) in &prep.runs {
        let demos = prep.demos.take(*n)?;
        let run = RunDir::create(dir, config, &manifest(config, Method::Bc, &prep.env, &demos))?;
        let out = bc_train(&demos, &config.bc, config.seed)?;
        let mut losses = String::from("epoch,train_loss,validation_loss\n");
        for (k, train) in out.train_losses.iter().enumerate() {
            let val = out.validation_losses.get(k).map(|v| v.to_string()).unwrap_or_default();
            writeln!(losses, "{k},{train},{val}").expect("writing to a String");
        }
        run.write_text("bc_losses.csv", &losses)?;
        let summary = serde_json::json!({
            "best_epoch": out.best_epoch,
            "no_holdout": out.no_holdout,
            "untrained": out.untrained,
        });
        run.write_text("bc.json", &format!("{summary:#}\n"))?;
        save_agent(&run.checkpoint_dir(None), &out.agent, out.best_epoch)?;
        let report = pool.install(|| final_eval(&out.agent, &prep.env, &prep.reference, config, Method::Bc.name(), *n))?;
        run.write_final(&report)?;
        dirs.push(run.root().to_path_buf());
    }
    Ok(dirs)
}

/// Final-style report for a saved policy against the config's reference demos.
pub fn evaluate_checkpoint(config: &RunConfig, base: &Path, checkpoint: &Path) -> Result<FinalEval, CliError> {
    let env = config.validate()?;
    let demos = config.demos.load(&env, base)?;
    let reference = match &config.reference_demos {
        Some(src) => src.load(&env, base)?,
        None => demos,
    };
    let agent = load_agent(checkpoint)?;
    if agent.normalizer.width() != env.state_dim() || agent.policy.spec.output_width() != env.action_dim() {
        return Err(CliError::Config("checkpoint does not fit the configured environment".into()));
    }
    let pool = thread_pool(config.threads)?;
    let n = reference.trajectories.len();
    pool.install(|| final_eval(&agent, &env, &reference, config, "checkpoint", n))
}

/// Run directories under `paths`: each path itself if it holds a final
/// report, otherwise its immediate subdirectories that do.
pub fn collect_runs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut runs = Vec::new();
    for p in paths {
        if p.join(FINAL_EVAL_FILE).exists() {
            runs.push(p.clone());
            continue;
        }
        let mut children: Vec<PathBuf> = fs::read_dir(p)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|c| c.join(FINAL_EVAL_FILE).exists())
            .collect();
        if children.is_empty() {
            return Err(CliError::Config(format!("{} holds no finished runs", p.display())));
        }
        children.sort();
        runs.extend(children);
    }
    Ok(runs)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (mean, (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// Comparison table with one row per (environment, demo count) and one group
/// of columns per method. A cell from a single run shows that run's episode
/// mean and std; several runs (seeds) show the mean and population std of
/// their episode means. Missing cells are left empty.
pub fn compare(runs: &[PathBuf]) -> Result<String, CliError> {
    let reports = runs.iter().map(|r| read_final(r)).collect::<Result<Vec<_>, _>>()?;
    let mut methods: Vec<String> = ["sil", "bc", "ablation"].map(String::from).to_vec();
    for r in &reports {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let mut cells: BTreeMap<(String, usize), BTreeMap<String, Vec<&FinalEval>>> = BTreeMap::new();
    for r in &reports {
        cells
            .entry((r.env.clone(), r.demo_count))
            .or_default()
            .entry(r.method.clone())
            .or_default()
            .push(r);
    }
    let mut out = String::from("env,demo_count");
    for m in &methods {
        write!(out, ",{m}_sinkhorn_mean,{m}_sinkhorn_std,{m}_return_mean,{m}_return_std,{m}_runs").unwrap();
    }
    out.push('\n');
    for ((env, n), by_method) in &cells {
        write!(out, "{env},{n}").unwrap();
        for m in &methods {
            match by_method.get(m) {
                None => out.push_str(",,,,,0"),
                Some(rs) => {
                    let sink: Vec<f64> = rs.iter().map(|r| r.sinkhorn.mean_sinkhorn.unwrap_or(f64::NAN)).collect();
                    let ret: Vec<f64> = rs.iter().map(|r| r.reward.mean_return).collect();
                    let (s, r) = if rs.len() == 1 {
                        let f = rs[0];
                        (
                            (sink[0], f.sinkhorn.std_sinkhorn.unwrap_or(f64::NAN)),
                            (ret[0], f.reward.std_return),
                        )
                    } else {
                        (mean_std(&sink), mean_std(&ret))
                    };
                    write!(out, ",{},{},{},{},{}", s.0, s.1, r.0, r.1, rs.len()).unwrap();
                }
            }
        }
        out.push('\n');
    }
    Ok(out)
}
