//! Desk-scale environments: a discrete gridworld and a continuous point mass.
//!
//! Both expose the same stepping interface over flat `f64` state and action
//! vectors. Gridworld actions are one-hot over four moves; point-mass actions
//! are 2-d forces clamped to the action bound.

mod demos;
mod expert;
mod normalize;
mod rollout;

pub use demos::{
    generate_demos, load_demos, read_trajectories, record_demos, write_demos, write_trajectories, DemoManifest, DemoSet,
    DEMO_FILE, DEMO_FORMAT_VERSION, MANIFEST_FILE,
};
pub use expert::{pd_expert, value_iteration_expert, Expert, PdExpert, TabularExpert, UniformRandom};
pub use normalize::{normalize_observation, RunningNormalizer};
pub use rollout::{rollout, rollout_traced, subsample, subsample_indices, ActionChoice, Actor, StepTrace};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Gridworld moves, in one-hot order.
pub const MOVES: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridworldParams {
    pub side: usize,
    pub goal: [usize; 2],
    pub step_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointmassParams {
    pub dt: f64,
    pub friction: f64,
    pub goal: [f64; 2],
    pub action_bound: f64,
    pub goal_radius: f64,
    /// Positions are clamped to `[-arena, arena]`; the velocity component
    /// pushing into the wall is zeroed.
    pub arena: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum EnvKind {
    Gridworld(GridworldParams),
    Pointmass(PointmassParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub horizon: usize,
    pub gamma: f64,
}

impl EnvSpec {
    /// `side x side` grid, goal in the top-right corner, horizon `4 * side`.
    pub fn gridworld(side: usize) -> Self {
        Self {
            kind: EnvKind::Gridworld(GridworldParams {
                side,
                goal: [side - 1, side - 1],
                step_penalty: 1.0,
            }),
            horizon: 4 * side,
            gamma: 0.99,
        }
    }

    pub fn pointmass() -> Self {
        Self {
            kind: EnvKind::Pointmass(PointmassParams {
                dt: 0.1,
                friction: 0.1,
                goal: [0.5, 0.5],
                action_bound: 1.0,
                goal_radius: 0.05,
                arena: 2.0,
            }),
            horizon: 100,
            gamma: 0.99,
        }
    }

    /// Built-in environments by name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "gridworld" => Ok(Self::gridworld(8)),
            "pointmass" => Ok(Self::pointmass()),
            other => Err(Error::InvalidArgument(format!("unknown environment {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("gamma must be in (0,1), got {}", self.gamma)));
        }
        match &self.kind {
            EnvKind::Gridworld(g) => {
                if g.side < 2 || g.goal[0] >= g.side || g.goal[1] >= g.side {
                    return Err(Error::InvalidArgument("gridworld needs side >= 2 and an in-grid goal".into()));
                }
            }
            EnvKind::Pointmass(p) => {
                let positive = [p.dt, p.action_bound, p.goal_radius, p.arena];
                if positive.iter().any(|v| !(*v > 0.0)) || !(0.0..1.0).contains(&p.friction) {
                    return Err(Error::InvalidArgument("invalid point-mass physics".into()));
                }
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            EnvKind::Gridworld(_) => 2,
            EnvKind::Pointmass(_) => 4,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self.kind {
            EnvKind::Gridworld(_) => 4,
            EnvKind::Pointmass(_) => 2,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, EnvKind::Gridworld(_))
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            EnvKind::Gridworld(_) => "gridworld",
            EnvKind::Pointmass(_) => "pointmass",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    /// One-hot for discrete actions, the clamped force for the point mass.
    pub action: Vec<f64>,
    /// Ground-truth reward. Only expert construction and evaluation read it.
    pub env_reward: f64,
    pub next_state: Vec<f64>,
    /// Terminal state reached. Horizon truncation is not `done`.
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub episode_return: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Ended in a terminal state rather than by truncation.
    pub fn terminated(&self) -> bool {
        self.transitions.last().is_some_and(|t| t.done)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub env_reward: f64,
    pub done: bool,
}

/// Grid cell of an encoded gridworld state.
pub fn grid_cell(params: &GridworldParams, state: &[f64]) -> (usize, usize) {
    let n = params.side as f64;
    let x = (state[0] * n).round().clamp(0.0, n - 1.0) as usize;
    let y = (state[1] * n).round().clamp(0.0, n - 1.0) as usize;
    (x, y)
}

pub fn encode_cell(params: &GridworldParams, x: usize, y: usize) -> Vec<f64> {
    let n = params.side as f64;
    vec![x as f64 / n, y as f64 / n]
}

pub fn env_reset<R: Rng + ?Sized>(spec: &EnvSpec, rng: &mut R) -> Vec<f64> {
    match &spec.kind {
        EnvKind::Gridworld(g) => {
            let cells = g.side * g.side;
            let goal = g.goal[1] * g.side + g.goal[0];
            let mut k = rng.random_range(0..cells - 1);
            if k >= goal {
                k += 1;
            }
            encode_cell(g, k % g.side, k / g.side)
        }
        EnvKind::Pointmass(_) => {
            vec![rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), 0.0, 0.0]
        }
    }
}

/// Index of the single hot entry of a one-hot action.
pub fn one_hot_index(action: &[f64], width: usize) -> Result<usize> {
    if action.len() != width {
        return Err(Error::Malformed(format!(
            "expected a one-hot action of width {width}, got width {}",
            action.len()
        )));
    }
    let mut hot = None;
    for (k, &v) in action.iter().enumerate() {
        if v == 1.0 && hot.is_none() {
            hot = Some(k);
        } else if v != 0.0 {
            return Err(Error::Malformed(format!("action {action:?} is not one-hot")));
        }
    }
    hot.ok_or_else(|| Error::Malformed(format!("action {action:?} is not one-hot")))
}

pub fn one_hot(index: usize, width: usize) -> Vec<f64> {
    let mut v = vec![0.0; width];
    v[index] = 1.0;
    v
}

pub fn env_step(spec: &EnvSpec, state: &[f64], action: &[f64]) -> Result<StepOutcome> {
    if state.len() != spec.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "environment state",
            expected: spec.state_dim(),
            actual: state.len(),
        });
    }
    match &spec.kind {
        EnvKind::Gridworld(g) => {
            let k = one_hot_index(action, 4)?;
            let (x, y) = grid_cell(g, state);
            let (dx, dy) = MOVES[k];
            let last = g.side as i64 - 1;
            let nx = (x as i64 + dx).clamp(0, last) as usize;
            let ny = (y as i64 + dy).clamp(0, last) as usize;
            let done = [nx, ny] == g.goal;
            Ok(StepOutcome {
                next_state: encode_cell(g, nx, ny),
                env_reward: if done { 0.0 } else { -g.step_penalty },
                done,
            })
        }
        EnvKind::Pointmass(p) => {
            if action.len() != 2 || action.iter().any(|a| !a.is_finite()) {
                return Err(Error::Malformed(format!("invalid point-mass action {action:?}")));
            }
            let mut next = vec![0.0; 4];
            for d in 0..2 {
                let a = action[d].clamp(-p.action_bound, p.action_bound);
                let mut v = (1.0 - p.friction) * state[2 + d] + a * p.dt;
                let mut x = state[d] + v * p.dt;
                if x.abs() > p.arena {
                    x = x.clamp(-p.arena, p.arena);
                    v = 0.0;
                }
                next[d] = x;
                next[2 + d] = v;
            }
            let dist = (next[0] - p.goal[0]).hypot(next[1] - p.goal[1]);
            debug_assert!(next.iter().all(|v| v.abs() <= 2.0 + 1e-12 || p.arena > 2.0));
            Ok(StepOutcome {
                next_state: next,
                env_reward: -dist,
                done: dist < p.goal_radius,
            })
        }
    }
}
