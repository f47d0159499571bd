use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const METRICS_HEADER: &str =
    "iter,mean_train_sinkhorn,mean_eval_sinkhorn_fixed,mean_env_return,critic_objective,policy_kl,entropy";

/// One training iteration. `mean_eval_sinkhorn_fixed` is only filled on
/// evaluation iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iter: usize,
    /// Mean transport value under the critic cost (fixed cost in ablations).
    pub mean_train_sinkhorn: f64,
    pub mean_eval_sinkhorn_fixed: Option<f64>,
    /// Mean ground-truth return of the training rollouts.
    pub mean_env_return: f64,
    /// Change of the mean transport value produced by the critic step.
    pub critic_objective: f64,
    pub policy_kl: f64,
    pub entropy: f64,
}

impl MetricsRow {
    /// CSV line without the trailing newline. Floats use the shortest
    /// round-trip representation, so equal runs give equal bytes.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let eval = self.mean_eval_sinkhorn_fixed.map(|v| v.to_string()).unwrap_or_default();
        write!(
            s,
            "{},{},{},{},{},{},{}",
            self.iter,
            self.mean_train_sinkhorn,
            eval,
            self.mean_env_return,
            self.critic_objective,
            self.policy_kl,
            self.entropy
        )
        .expect("writing to a String");
        s
    }

    pub fn parse_csv(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Malformed(format!("metrics row has {} fields: {line}", fields.len())));
        }
        let num = |k: usize| -> Result<f64> {
            fields[k]
                .parse()
                .map_err(|_| Error::Malformed(format!("metrics field {k} is not a number: {}", fields[k])))
        };
        Ok(Self {
            iter: fields[0]
                .parse()
                .map_err(|_| Error::Malformed(format!("bad iteration index: {}", fields[0])))?,
            mean_train_sinkhorn: num(1)?,
            mean_eval_sinkhorn_fixed: if fields[2].is_empty() { None } else { Some(num(2)?) },
            mean_env_return: num(3)?,
            critic_objective: num(4)?,
            policy_kl: num(5)?,
            entropy: num(6)?,
        })
    }
}
