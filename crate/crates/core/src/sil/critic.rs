use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrajectoryPair;
use crate::nn::{mlp_backward_into, mlp_forward, mlp_init, mlp_output, Activation, AdamState, MlpSpec, ParameterVector};
use crate::ot::{cosine_cost_matrix, sinkhorn, transport_cost, CostMatrix, Marginals, SinkhornSettings, TransportPlan, NORM_FLOOR};
use crate::{Error, Result};

/// Feature network `f_w` whose cosine geometry defines the ground cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticParams {
    pub spec: MlpSpec,
    pub params: ParameterVector,
    pub learning_rate: f64,
}

impl CriticParams {
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        feature_dim: usize,
        activation: Activation,
        learning_rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::InvalidSpec("critic feature dimension must be >= 1".into()));
        }
        let spec = MlpSpec::with_hidden(input, hidden, feature_dim, activation)?;
        let params = mlp_init(&spec, rng);
        Ok(Self {
            spec,
            params,
            learning_rate,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_width()
    }

    pub fn features(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let out = rows
            .iter()
            .map(|r| mlp_output(&self.spec, &self.params, r))
            .collect::<Result<Vec<_>>>()?;
        if out.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("critic features"));
        }
        Ok(out)
    }
}

/// `C[i][j] = 1 - cos(f_w(x_i), f_w(y_j))`; features are computed once per row.
pub fn adversarial_cost(critic: &CriticParams, learner: &[Vec<f64>], expert: &[Vec<f64>]) -> Result<CostMatrix> {
    let left = critic.features(learner)?;
    let right = critic.features(expert)?;
    Ok(cosine_cost_matrix(&left, &right)?.0)
}

/// Which ground cost the transport problem uses.
#[derive(Debug, Clone, Copy)]
pub enum GroundCost<'a> {
    Adversarial(&'a CriticParams),
    /// Cosine cost on the raw encoded rows.
    FixedCosine,
}

impl GroundCost<'_> {
    pub fn cost(&self, pair: &TrajectoryPair) -> Result<CostMatrix> {
        match self {
            GroundCost::Adversarial(critic) => adversarial_cost(critic, &pair.learner, &pair.expert),
            GroundCost::FixedCosine => Ok(cosine_cost_matrix(&pair.learner, &pair.expert)?.0),
        }
    }
}

/// Sinkhorn plan and transport value of a pair under uniform marginals.
pub fn pair_sinkhorn(
    ground: GroundCost<'_>,
    pair: &TrajectoryPair,
    settings: &SinkhornSettings,
) -> Result<(CostMatrix, TransportPlan, f64)> {
    let cost = ground.cost(pair)?;
    let plan = sinkhorn(&cost, &Marginals::uniform(cost.rows(), cost.cols()), settings)?;
    let value = transport_cost(&plan, &cost)?;
    Ok((cost, plan, value))
}

/// `d/du (1 - cos(u, v))`, zero when either vector is degenerate.
fn cosine_cost_grad(u: &[f64], v: &[f64], out: &mut [f64], weight: f64) {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu < NORM_FLOOR || nv < NORM_FLOOR {
        return;
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let a = 1.0 / (nu * nv);
    let b = dot / (nu * nu * nu * nv);
    for k in 0..u.len() {
        out[k] -= weight * (a * v[k] - b * u[k]);
    }
}

/// Gradient of `<P, C_w>` in the critic parameters with the plan held fixed.
pub fn critic_gradient(critic: &CriticParams, pair: &TrajectoryPair, plan: &TransportPlan) -> Result<Vec<f64>> {
    let (n, m) = (pair.learner.len(), pair.expert.len());
    if plan.rows() != n || plan.cols() != m {
        return Err(Error::DimensionMismatch {
            context: "critic plan shape",
            expected: n * m,
            actual: plan.rows() * plan.cols(),
        });
    }
    let forward = |rows: &[Vec<f64>]| {
        rows.iter()
            .map(|r| mlp_forward(&critic.spec, &critic.params, r))
            .collect::<Result<Vec<_>>>()
    };
    let left = forward(&pair.learner)?;
    let right = forward(&pair.expert)?;
    let d = critic.output_dim();
    let mut grad_left = vec![vec![0.0; d]; n];
    let mut grad_right = vec![vec![0.0; d]; m];
    for i in 0..n {
        for j in 0..m {
            let p = plan.get(i, j);
            if p == 0.0 {
                continue;
            }
            let (u, v) = (&left[i].0, &right[j].0);
            cosine_cost_grad(u, v, &mut grad_left[i], p);
            cosine_cost_grad(v, u, &mut grad_right[j], p);
        }
    }
    let mut grad = vec![0.0; critic.params.len()];
    for ((_, tape), g) in left.iter().zip(&grad_left).chain(right.iter().zip(&grad_right)) {
        mlp_backward_into(&critic.spec, &critic.params, tape, g, &mut grad)?;
    }
    Ok(grad)
}

/// Result of one critic ascent step.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticStep {
    pub critic: CriticParams,
    /// Mean transport value at the plans the gradient was taken at.
    pub mean_before: f64,
    /// Set when the gradient was non-finite and the step skipped.
    pub skipped: bool,
}

/// Ascent step on the mean transport value using precomputed plans.
pub fn critic_ascent(
    critic: &CriticParams,
    adam: &mut AdamState,
    pairs: &[TrajectoryPair],
    plans: &[TransportPlan],
) -> Result<(CriticParams, bool)> {
    if pairs.is_empty() || pairs.len() != plans.len() {
        return Err(Error::InvalidArgument("critic update needs one plan per pair (at least one pair)".into()));
    }
    let grads = pairs
        .par_iter()
        .zip(plans.par_iter())
        .map(|(pair, plan)| critic_gradient(critic, pair, plan))
        .collect::<Result<Vec<_>>>()?;
    let scale = 1.0 / pairs.len() as f64;
    let mut total = vec![0.0; critic.params.len()];
    for g in &grads {
        for (t, v) in total.iter_mut().zip(g) {
            *t += v;
        }
    }
    // Adam descends, so feed the negated gradient to ascend.
    total.iter_mut().for_each(|t| *t *= -scale);
    let mut next = critic.clone();
    if total.iter().any(|g| !g.is_finite()) {
        return Ok((next, true));
    }
    adam.apply(&mut next.params, &total)?;
    Ok((next, false))
}

/// Mean Sinkhorn transport value of `pairs` under the critic cost.
pub fn mean_sinkhorn(critic: &CriticParams, pairs: &[TrajectoryPair], settings: &SinkhornSettings) -> Result<f64> {
    let values = pairs
        .par_iter()
        .map(|p| pair_sinkhorn(GroundCost::Adversarial(critic), p, settings).map(|(_, _, v)| v))
        .collect::<Result<Vec<_>>>()?;
    Ok(values.iter().sum::<f64>() / values.len().max(1) as f64)
}

/// Solves every pair under the current critic, then takes one ascent step.
pub fn critic_update(
    critic: &CriticParams,
    adam: &mut AdamState,
    pairs: &[TrajectoryPair],
    settings: &SinkhornSettings,
) -> Result<CriticStep> {
    let solved = pairs
        .par_iter()
        .map(|p| pair_sinkhorn(GroundCost::Adversarial(critic), p, settings))
        .collect::<Result<Vec<_>>>()?;
    let mean_before = solved.iter().map(|s| s.2).sum::<f64>() / solved.len().max(1) as f64;
    let plans: Vec<TransportPlan> = solved.into_iter().map(|s| s.1).collect();
    let (next, skipped) = critic_ascent(critic, adam, pairs, &plans)?;
    Ok(CriticStep {
        critic: next,
        mean_before,
        skipped,
    })
}
