//! Evaluation metrics and the behavioral-cloning baseline.
//!
//! The Sinkhorn metric uses a fixed cosine cost on `[normalize(s), a]` rows,
//! with the state normalizer fitted on the demonstrations. It never sees a
//! critic, so it can compare methods that do not have one. By default both
//! sides are padded with absorbing rows after reaching the goal, the same
//! occupancy the learner is trained on; without padding, an episode that
//! never reaches the goal is hard to tell apart from one that does.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{rollout, Actor, DemoSet, EnvSpec, RunningNormalizer};
use crate::nn::{Activation, AdamState};
use crate::ot::{cosine_cost_matrix, sinkhorn, transport_cost, Marginals, SinkhornSettings};
use crate::policy::{Agent, PolicyParams};
use crate::rng::{episode_stream, stream, Stream};
use crate::sil::{padded_sample_count, sil_train, IterationReport, SampleEncoder, SilConfig, SilOutcome};
use crate::{Error, Result};

/// Episodes used when no count is given.
pub const DEFAULT_EVAL_EPISODES: usize = 50;

/// Aggregates over evaluation episodes. Standard deviations use the
/// population formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub stochastic: bool,
    pub mean_return: f64,
    pub std_return: f64,
    /// Fraction of episodes that reached a terminal (goal) state.
    pub success_rate: f64,
    pub mean_sinkhorn: Option<f64>,
    pub std_sinkhorn: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub episodes: usize,
    pub stochastic: bool,
    pub settings: SinkhornSettings,
    /// Pad goal-terminated episodes and demos with absorbing rows.
    pub absorbing: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            episodes: DEFAULT_EVAL_EPISODES,
            stochastic: true,
            settings: SinkhornSettings::evaluation(),
            absorbing: true,
        }
    }
}

/// Rolls out `episodes` episodes, each on its own evaluation stream. With
/// demonstrations, every rollout is subsampled like the demos and compared to
/// one uniformly chosen demo under the fixed cosine cost.
pub fn evaluate<A>(actor: &A, env: &EnvSpec, demos: Option<&DemoSet>, opts: &EvalOptions, seed: u64) -> Result<EvalReport>
where
    A: Actor + Clone + Send + Sync,
{
    if opts.episodes == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    let reference = match demos {
        Some(d) => {
            if d.trajectories.is_empty() {
                return Err(Error::InvalidArgument("evaluation demo set is empty".into()));
            }
            let encoder = SampleEncoder::from_demos(d, opts.absorbing);
            let target = padded_sample_count(env.horizon, d.manifest.subsample_factor);
            let rows: Vec<Vec<Vec<f64>>> = d.trajectories.iter().map(|t| encoder.expert_rows(t, target)).collect();
            Some((encoder, rows, d.manifest.subsample_factor))
        }
        None => None,
    };
    let results = (0..opts.episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = episode_stream(seed, Stream::Eval, e as u64);
            let traj = rollout(env, &mut actor.clone(), &mut rng, opts.stochastic)?;
            let distance = match &reference {
                Some((encoder, demo_rows, factor)) => {
                    let learner = encoder.learner_samples(&traj, env.horizon, *factor, &mut rng)?.rows;
                    let expert = &demo_rows[rng.random_range(0..demo_rows.len())];
                    let (cost, _) = cosine_cost_matrix(&learner, expert)?;
                    let plan = sinkhorn(&cost, &Marginals::uniform(cost.rows(), cost.cols()), &opts.settings)?;
                    Some(transport_cost(&plan, &cost)?)
                }
                None => None,
            };
            Ok((traj.episode_return, traj.terminated(), distance))
        })
        .collect::<Result<Vec<_>>>()?;

    let returns: Vec<f64> = results.iter().map(|r| r.0).collect();
    let (mean_return, std_return) = mean_std(&returns);
    let success_rate = results.iter().filter(|r| r.1).count() as f64 / results.len() as f64;
    let distances: Option<Vec<f64>> = results.iter().map(|r| r.2).collect();
    let (mean_sinkhorn, std_sinkhorn) = match distances {
        Some(d) => {
            let (m, s) = mean_std(&d);
            (Some(m), Some(s))
        }
        None => (None, None),
    };
    Ok(EvalReport {
        episodes: opts.episodes,
        stochastic: opts.stochastic,
        mean_return,
        std_return,
        success_rate,
        mean_sinkhorn,
        std_sinkhorn,
    })
}

/// Fixed-cost Sinkhorn distance of stochastic rollouts to the demonstrations.
pub fn eval_sinkhorn_fixed<A>(
    actor: &A,
    env: &EnvSpec,
    demos: &DemoSet,
    episodes: usize,
    settings: &SinkhornSettings,
    seed: u64,
) -> Result<EvalReport>
where
    A: Actor + Clone + Send + Sync,
{
    let opts = EvalOptions {
        episodes,
        stochastic: true,
        settings: *settings,
        ..Default::default()
    };
    evaluate(actor, env, Some(demos), &opts, seed)
}

/// Ground-truth return statistics.
pub fn eval_reward<A>(actor: &A, env: &EnvSpec, episodes: usize, seed: u64, stochastic: bool) -> Result<EvalReport>
where
    A: Actor + Clone + Send + Sync,
{
    let opts = EvalOptions {
        episodes,
        stochastic,
        ..Default::default()
    };
    evaluate(actor, env, None, &opts, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub init_log_std: f64,
    pub holdout_fraction: f64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            epochs: 300,
            learning_rate: 3e-3,
            init_log_std: -0.5,
            holdout_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BcOutcome {
    pub agent: Agent,
    /// Mean negative log-likelihood on the training split, before each epoch
    /// and after the last.
    pub train_losses: Vec<f64>,
    pub validation_losses: Vec<f64>,
    /// Too few samples for a holdout split; trained on everything.
    pub no_holdout: bool,
    /// Zero epochs requested; the agent is the initialized policy.
    pub untrained: bool,
    pub best_epoch: usize,
}

fn mean_nll(policy: &PolicyParams, data: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let mut total = 0.0;
    for (x, a) in data {
        total -= policy.distribution(x)?.log_prob(a)?;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Maximum-likelihood fit of expert actions. Returns the policy with the best
/// validation loss (best training loss without a holdout).
pub fn bc_train(demos: &DemoSet, config: &BcConfig, seed: u64) -> Result<BcOutcome> {
    let env = demos.env();
    let pairs: Vec<(&[f64], &[f64])> = demos
        .trajectories
        .iter()
        .flat_map(|t| t.transitions.iter().map(|x| (x.state.as_slice(), x.action.as_slice())))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("behavioral cloning needs demonstrations".into()));
    }
    let normalizer = RunningNormalizer::fitted(env.state_dim(), pairs.iter().map(|p| p.0));
    let mut data: Vec<(Vec<f64>, Vec<f64>)> = pairs.iter().map(|(s, a)| (normalizer.apply(s), a.to_vec())).collect();

    let mut rng = stream(seed, Stream::Bc);
    let mut policy = PolicyParams::for_env(env, &config.hidden, config.activation, config.init_log_std, &mut rng)?;
    data.shuffle(&mut rng);
    let holdout = (data.len() as f64 * config.holdout_fraction).floor() as usize;
    let no_holdout = data.len() < 10 || holdout == 0;
    let (validation, train) = if no_holdout {
        (Vec::new(), data)
    } else {
        let train = data.split_off(holdout);
        (data, train)
    };
    let score = |p: &PolicyParams, train_loss: f64| -> Result<f64> {
        if no_holdout {
            Ok(train_loss)
        } else {
            mean_nll(p, &validation)
        }
    };

    let mut adam = AdamState::new(policy.params.len(), config.learning_rate);
    let mut train_losses = vec![mean_nll(&policy, &train)?];
    let mut validation_losses = Vec::new();
    let mut best = (score(&policy, train_losses[0])?, 0, policy.clone());
    if !no_holdout {
        validation_losses.push(best.0);
    }
    for epoch in 1..=config.epochs {
        let mut grad = vec![0.0; policy.params.len()];
        let scale = -1.0 / train.len() as f64;
        for (x, a) in &train {
            let (dist, tape) = policy.distribution_with_tape(x)?;
            let mut g = dist.grad_log_prob(a)?;
            g.output.iter_mut().chain(g.log_std.iter_mut()).for_each(|v| *v *= scale);
            policy.backward_into(&tape, &g, &mut grad)?;
        }
        adam.apply(&mut policy.params, &grad)?;
        let loss = mean_nll(&policy, &train)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("behavioral cloning loss"));
        }
        train_losses.push(loss);
        let s = score(&policy, loss)?;
        if !no_holdout {
            validation_losses.push(s);
        }
        if s < best.0 {
            best = (s, epoch, policy.clone());
        }
    }
    Ok(BcOutcome {
        agent: Agent::new(best.2, normalizer),
        train_losses,
        validation_losses,
        no_holdout,
        untrained: config.epochs == 0,
        best_epoch: best.1,
    })
}

/// Training with the critic replaced by the fixed cosine cost.
pub fn run_ablation(
    config: &SilConfig,
    env: &EnvSpec,
    demos: &DemoSet,
    seed: u64,
    observer: &mut dyn FnMut(&IterationReport<'_>) -> Result<()>,
) -> Result<SilOutcome> {
    let config = SilConfig {
        fixed_cost: true,
        ..config.clone()
    };
    sil_train(&config, env, demos, seed, observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{one_hot, value_iteration_expert, ActionChoice, DemoManifest, Trajectory, Transition};
    use crate::rng::SeededRng;

    #[derive(Clone)]
    struct Still;

    impl Actor for Still {
        fn act(&mut self, state: &[f64], _: &mut SeededRng, _: bool) -> Result<ActionChoice> {
            Ok(ActionChoice::deterministic(state, one_hot(3, 4)))
        }
    }

    fn constant_demos(action: usize, count: usize) -> DemoSet {
        let env = EnvSpec::gridworld(4);
        let trajectories = (0..count)
            .map(|k| Trajectory {
                transitions: (0..4)
                    .map(|i| Transition {
                        state: vec![(i % 4) as f64 / 4.0, (k % 4) as f64 / 4.0],
                        action: one_hot(action, 4),
                        env_reward: -1.0,
                        next_state: vec![0.0, 0.0],
                        done: false,
                    })
                    .collect(),
                episode_return: -4.0,
            })
            .collect();
        DemoSet {
            manifest: DemoManifest {
                format_version: 1,
                env,
                seed: 0,
                subsample_factor: 1,
                count,
                expert: "constant".into(),
                stochastic: false,
            },
            trajectories,
        }
    }

    #[test]
    fn wall_push_returns_minus_horizon() {
        let env = EnvSpec::gridworld(8);
        let r = eval_reward(&Still, &env, 10, 3, false).unwrap();
        assert_eq!(r.mean_return, -(env.horizon as f64));
        assert_eq!(r.std_return, 0.0);
        assert_eq!(r.success_rate, 0.0);
    }

    #[test]
    fn single_episode_has_zero_std() {
        let env = EnvSpec::gridworld(4);
        let demos = constant_demos(0, 3);
        let r = eval_sinkhorn_fixed(&Still, &env, &demos, 1, &SinkhornSettings::evaluation(), 1).unwrap();
        assert_eq!(r.std_sinkhorn, Some(0.0));
        assert!(r.mean_sinkhorn.unwrap() >= 0.0);
    }

    #[test]
    fn deterministic_reports_repeat() {
        let env = EnvSpec::gridworld(8);
        let expert = value_iteration_expert(&env).unwrap();
        let a = eval_reward(&expert, &env, 20, 9, false).unwrap();
        let b = eval_reward(&expert, &env, 20, 9, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.success_rate, 1.0);
    }

    #[test]
    fn constant_action_expert_is_cloned() {
        let demos = constant_demos(2, 8);
        let config = BcConfig {
            epochs: 200,
            ..Default::default()
        };
        let out = bc_train(&demos, &config, 4).unwrap();
        assert!(!out.no_holdout);
        let hits = demos
            .trajectories
            .iter()
            .flat_map(|t| &t.transitions)
            .filter(|x| {
                let input = out.agent.normalizer.apply(&x.state);
                out.agent.policy.distribution(&input).unwrap().mode() == one_hot(2, 4)
            })
            .count();
        assert_eq!(hits, 32);
        assert!(out.train_losses.windows(2).take(5).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_epochs_is_flagged() {
        let out = bc_train(&constant_demos(1, 1), &BcConfig { epochs: 0, ..Default::default() }, 0).unwrap();
        assert!(out.untrained && out.no_holdout);
        assert_eq!(out.train_losses.len(), 1);
    }
}
