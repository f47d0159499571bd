//! Sinkhorn imitation learning.
//!
//! A learner policy is trained to match an expert's state-action occupancy
//! measure by minimizing the entropic optimal-transport (Sinkhorn) distance
//! between learner and expert trajectories. The ground cost is a cosine
//! distance in a feature space that an adversarial critic keeps pushing apart.
//!
//! Module map:
//! - [`nn`]: dense networks with exact reverse-mode gradients and Adam.
//! - [`ot`]: cosine costs, log-domain Sinkhorn, brute-force exact OT oracle.
//! - [`env`]: gridworld and point-mass environments, experts, rollouts, demos.
//! - [`policy`]: stochastic policy heads, GAE, KL-penalized policy update.
//! - [`sil`]: adversarial critic, reward proxy, and the training loop.
//! - [`eval`]: fixed-cost Sinkhorn metric, return metric, behavioral cloning.

pub mod env;
mod error;
pub mod eval;
pub mod nn;
pub mod ot;
pub mod policy;
pub mod rng;
pub mod sil;

pub use error::{Error, Result};

pub use env::{EnvKind, EnvSpec, Trajectory, Transition};
pub use eval::EvalReport;
pub use nn::{Activation, AdamState, MlpSpec, ParameterVector};
pub use ot::{CostMatrix, Marginals, SinkhornSettings, TransportPlan};
pub use policy::{PolicyHead, PolicyParams, ValueParams};
pub use sil::{CriticParams, MetricsRow, SilConfig};
