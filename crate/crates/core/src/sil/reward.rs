use super::{pair_sinkhorn, GroundCost, TrajectoryPair};
use crate::ot::{SinkhornSettings, TransportPlan};
use crate::{Error, Result};

/// Shaped rewards live in `[0, SHAPED_MAX]`.
pub const SHAPED_MAX: f64 = 4.0;

/// Per-learner-sample rewards for one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardAssignment {
    /// `-sum_j C_ij P_ij`; sums to minus the transport value.
    pub raw: Vec<f64>,
    /// `2 L (raw + 2 / L)`, clamped to `[0, 4]`.
    pub shaped: Vec<f64>,
    pub plan_row_mass: Vec<f64>,
    pub transport_value: f64,
    pub plan: TransportPlan,
}

impl RewardAssignment {
    /// `|sum raw + transport value|`.
    pub fn identity_error(&self) -> f64 {
        (self.raw.iter().sum::<f64>() + self.transport_value).abs()
    }
}

/// Maps a raw reward of a trajectory with `len` samples into `[0, 4]`.
///
/// Under uniform marginals each row carries mass `1/L` and the cosine cost is
/// at most 2, so `raw` lies in `[-2/L, 0]`; the clamp only absorbs the
/// Sinkhorn marginal tolerance.
pub fn shape_reward(raw: f64, len: usize) -> f64 {
    let l = len as f64;
    (2.0 * l * (raw + 2.0 / l)).clamp(0.0, SHAPED_MAX)
}

pub fn sil_rewards(pair: &TrajectoryPair, ground: GroundCost<'_>, settings: &SinkhornSettings) -> Result<RewardAssignment> {
    if pair.learner.is_empty() || pair.expert.is_empty() {
        return Err(Error::InvalidArgument("reward pair has an empty side".into()));
    }
    let (cost, plan, transport_value) = pair_sinkhorn(ground, pair, settings)?;
    let n = cost.rows();
    let raw: Vec<f64> = (0..n)
        .map(|i| -cost.row(i).iter().zip(plan.row(i)).map(|(c, p)| c * p).sum::<f64>())
        .collect();
    let shaped = raw.iter().map(|&r| shape_reward(r, n)).collect();
    Ok(RewardAssignment {
        raw,
        shaped,
        plan_row_mass: plan.row_sums(),
        transport_value,
        plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn tight() -> SinkhornSettings {
        SinkhornSettings {
            epsilon: 1e-3,
            ..Default::default()
        }
    }

    #[test]
    fn self_matching_gives_maximal_shaped_reward() {
        let mut rng = seeded(5);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|k| {
                let mut v = vec![0.0; 5];
                v[k] = 1.0 + rng.random_range(0.0..1.0);
                v
            })
            .collect();
        let pair = TrajectoryPair {
            learner: rows.clone(),
            expert: rows,
        };
        let r = sil_rewards(&pair, GroundCost::FixedCosine, &tight()).unwrap();
        assert!(r.raw.iter().all(|v| v.abs() < 1e-6));
        assert!(r.shaped.iter().all(|v| (v - 4.0).abs() < 1e-4));
    }

    #[test]
    fn single_coupling() {
        let pair = TrajectoryPair {
            learner: vec![vec![1.0, 0.0]],
            expert: vec![vec![1.0, 1.0]],
        };
        let c = 1.0 - 1.0 / 2f64.sqrt();
        let r = sil_rewards(&pair, GroundCost::FixedCosine, &SinkhornSettings::default()).unwrap();
        assert!((r.raw[0] + c).abs() < 1e-12);
        assert!((r.shaped[0] - 2.0 * (2.0 - c)).abs() < 1e-12);
    }

    #[test]
    fn raw_rewards_sum_to_minus_transport_value() {
        let mut rng = seeded(6);
        for _ in 0..50 {
            let n = rng.random_range(1..10);
            let m = rng.random_range(1..10);
            let mut rows = |k: usize| -> Vec<Vec<f64>> {
                (0..k).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
            };
            let pair = TrajectoryPair {
                learner: rows(n),
                expert: rows(m),
            };
            let r = sil_rewards(&pair, GroundCost::FixedCosine, &SinkhornSettings::default()).unwrap();
            assert!(r.identity_error() <= 1e-9);
            assert!(r.shaped.iter().all(|v| (0.0..=4.0).contains(v)));
        }
    }

    #[test]
    fn shaping_endpoints() {
        assert_eq!(shape_reward(0.0, 8), 4.0);
        assert_eq!(shape_reward(-2.0 / 8.0, 8), 0.0);
        assert_eq!(shape_reward(-1.0, 8), 0.0);
    }
}
