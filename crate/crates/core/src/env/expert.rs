use rand::Rng;

use super::{encode_cell, env_step, grid_cell, one_hot, ActionChoice, Actor, EnvKind, EnvSpec, GridworldParams};
use crate::rng::SeededRng;
use crate::{Error, Result};

/// Optimal deterministic gridworld policy from value iteration.
#[derive(Debug, Clone)]
pub struct TabularExpert {
    pub params: GridworldParams,
    /// Indexed by `y * side + x`; the goal cell holds 0.
    pub values: Vec<f64>,
    pub actions: Vec<usize>,
    pub bellman_residual: f64,
}

impl TabularExpert {
    pub fn action_at(&self, x: usize, y: usize) -> usize {
        self.actions[y * self.params.side + x]
    }
}

impl Actor for TabularExpert {
    fn act(&mut self, state: &[f64], _: &mut SeededRng, _: bool) -> Result<ActionChoice> {
        let (x, y) = grid_cell(&self.params, state);
        Ok(ActionChoice::deterministic(state, one_hot(self.action_at(x, y), 4)))
    }
}

pub fn value_iteration_expert(spec: &EnvSpec) -> Result<TabularExpert> {
    let EnvKind::Gridworld(g) = &spec.kind else {
        return Err(Error::InvalidArgument("value iteration needs a gridworld".into()));
    };
    let n = g.side;
    let goal = g.goal[1] * n + g.goal[0];
    // successor cell, reward and termination for every (cell, move)
    let mut model = Vec::with_capacity(n * n * 4);
    for cell in 0..n * n {
        let state = encode_cell(g, cell % n, cell / n);
        for a in 0..4 {
            let out = env_step(spec, &state, &one_hot(a, 4))?;
            let (nx, ny) = grid_cell(g, &out.next_state);
            model.push((ny * n + nx, out.env_reward, out.done));
        }
    }
    let backup = |values: &[f64], cell: usize| -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for a in 0..4 {
            let (next, r, done) = model[cell * 4 + a];
            let q = r + if done { 0.0 } else { spec.gamma * values[next] };
            // strict comparison keeps the first maximizer in move order
            if q > best.0 + 1e-12 {
                best = (q, a);
            }
        }
        best
    };

    let mut values = vec![0.0; n * n];
    let mut residual = f64::INFINITY;
    for _ in 0..100_000 {
        residual = 0.0;
        for cell in (0..n * n).filter(|&c| c != goal) {
            let (q, _) = backup(&values, cell);
            residual = f64::max(residual, (q - values[cell]).abs());
            values[cell] = q;
        }
        if residual <= 1e-13 {
            break;
        }
    }
    let mut actions = vec![0; n * n];
    let mut final_residual: f64 = 0.0;
    for cell in (0..n * n).filter(|&c| c != goal) {
        let (q, a) = backup(&values, cell);
        final_residual = final_residual.max((q - values[cell]).abs());
        actions[cell] = a;
    }
    debug_assert!(final_residual <= residual.max(1e-13) * 2.0);
    Ok(TabularExpert {
        params: g.clone(),
        values,
        actions,
        bellman_residual: final_residual,
    })
}

/// Proportional-derivative controller toward the goal.
#[derive(Debug, Clone)]
pub struct PdExpert {
    pub goal: [f64; 2],
    pub kp: f64,
    pub kd: f64,
    pub action_bound: f64,
}

impl PdExpert {
    pub fn control(&self, state: &[f64]) -> Vec<f64> {
        (0..2)
            .map(|d| {
                (self.kp * (self.goal[d] - state[d]) - self.kd * state[2 + d])
                    .clamp(-self.action_bound, self.action_bound)
            })
            .collect()
    }
}

impl Actor for PdExpert {
    fn act(&mut self, state: &[f64], _: &mut SeededRng, _: bool) -> Result<ActionChoice> {
        Ok(ActionChoice::deterministic(state, self.control(state)))
    }
}

pub fn pd_expert(spec: &EnvSpec) -> Result<PdExpert> {
    let EnvKind::Pointmass(p) = &spec.kind else {
        return Err(Error::InvalidArgument("the PD expert needs a point-mass environment".into()));
    };
    Ok(PdExpert {
        goal: p.goal,
        kp: 2.0,
        kd: 1.5,
        action_bound: p.action_bound,
    })
}

/// The scripted expert of an environment.
#[derive(Debug, Clone)]
pub enum Expert {
    Tabular(TabularExpert),
    Pd(PdExpert),
}

impl Expert {
    pub fn for_env(spec: &EnvSpec) -> Result<Self> {
        match spec.kind {
            EnvKind::Gridworld(_) => value_iteration_expert(spec).map(Expert::Tabular),
            EnvKind::Pointmass(_) => pd_expert(spec).map(Expert::Pd),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Expert::Tabular(_) => "value-iteration",
            Expert::Pd(_) => "pd-controller",
        }
    }
}

impl Actor for Expert {
    fn act(&mut self, state: &[f64], rng: &mut SeededRng, stochastic: bool) -> Result<ActionChoice> {
        match self {
            Expert::Tabular(e) => e.act(state, rng, stochastic),
            Expert::Pd(e) => e.act(state, rng, stochastic),
        }
    }
}

/// Uniformly random actions: a baseline, not a learner.
#[derive(Debug, Clone)]
pub struct UniformRandom {
    pub spec: EnvSpec,
}

impl Actor for UniformRandom {
    fn act(&mut self, state: &[f64], rng: &mut SeededRng, _: bool) -> Result<ActionChoice> {
        let action = match &self.spec.kind {
            EnvKind::Gridworld(_) => one_hot(rng.random_range(0..4), 4),
            EnvKind::Pointmass(p) => (0..2)
                .map(|_| rng.random_range(-p.action_bound..=p.action_bound))
                .collect(),
        };
        Ok(ActionChoice::deterministic(state, action))
    }
}
