//! Demonstration sets on disk.
//!
//! A demo directory holds `demos.jsonl` (one trajectory per line) and
//! `manifest.json` recording the environment, seed and subsample factor.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{rollout, subsample, Actor, EnvSpec, Expert, Trajectory, Transition};
use crate::rng::{episode_stream, Stream};
use crate::{Error, Result};

pub const DEMO_FILE: &str = "demos.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEMO_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoManifest {
    pub format_version: u32,
    pub env: EnvSpec,
    pub seed: u64,
    pub subsample_factor: usize,
    pub count: usize,
    pub expert: String,
    pub stochastic: bool,
}

#[derive(Debug, Clone)]
pub struct DemoSet {
    pub manifest: DemoManifest,
    pub trajectories: Vec<Trajectory>,
}

impl DemoSet {
    /// The first `count` demonstrations, keeping the manifest consistent.
    pub fn take(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.trajectories.len() {
            return Err(Error::InvalidArgument(format!(
                "requested {count} demos, {} available",
                self.trajectories.len()
            )));
        }
        let mut manifest = self.manifest.clone();
        manifest.count = count;
        Ok(Self {
            manifest,
            trajectories: self.trajectories[..count].to_vec(),
        })
    }

    pub fn env(&self) -> &EnvSpec {
        &self.manifest.env
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryRecord {
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    env_rewards: Vec<f64>,
    next_states: Vec<Vec<f64>>,
    dones: Vec<bool>,
    episode_return: f64,
}

impl From<&Trajectory> for TrajectoryRecord {
    fn from(t: &Trajectory) -> Self {
        Self {
            states: t.transitions.iter().map(|x| x.state.clone()).collect(),
            actions: t.transitions.iter().map(|x| x.action.clone()).collect(),
            env_rewards: t.transitions.iter().map(|x| x.env_reward).collect(),
            next_states: t.transitions.iter().map(|x| x.next_state.clone()).collect(),
            dones: t.transitions.iter().map(|x| x.done).collect(),
            episode_return: t.episode_return,
        }
    }
}

impl TryFrom<TrajectoryRecord> for Trajectory {
    type Error = Error;

    fn try_from(r: TrajectoryRecord) -> Result<Self> {
        let n = r.states.len();
        let lens = [r.actions.len(), r.env_rewards.len(), r.next_states.len(), r.dones.len()];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Malformed(format!(
                "trajectory field lengths differ: {n} states, then {lens:?}"
            )));
        }
        let transitions = (0..n)
            .map(|i| Transition {
                state: r.states[i].clone(),
                action: r.actions[i].clone(),
                env_reward: r.env_rewards[i],
                next_state: r.next_states[i].clone(),
                done: r.dones[i],
            })
            .collect();
        Ok(Trajectory {
            transitions,
            episode_return: r.episode_return,
        })
    }
}

/// Rolls out `count` demonstrations of `actor`, each on its own stream, and
/// subsamples them by `subsample_factor`.
pub fn record_demos<A: Actor + Clone>(
    spec: &EnvSpec,
    actor: &A,
    count: usize,
    subsample_factor: usize,
    seed: u64,
    stochastic: bool,
) -> Result<Vec<Trajectory>> {
    (0..count)
        .map(|i| {
            let mut rng = episode_stream(seed, Stream::Demos, i as u64);
            let full = rollout(spec, &mut actor.clone(), &mut rng, stochastic)?;
            subsample(&full, subsample_factor, &mut rng)
        })
        .collect()
}

/// Demonstrations from the environment's scripted expert.
pub fn generate_demos(spec: &EnvSpec, count: usize, subsample_factor: usize, seed: u64) -> Result<DemoSet> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::InvalidArgument("demo count must be >= 1".into()));
    }
    let expert = Expert::for_env(spec)?;
    let trajectories = record_demos(spec, &expert, count, subsample_factor, seed, false)?;
    Ok(DemoSet {
        manifest: DemoManifest {
            format_version: DEMO_FORMAT_VERSION,
            env: spec.clone(),
            seed,
            subsample_factor,
            count,
            expert: expert.name().to_string(),
            stochastic: false,
        },
        trajectories,
    })
}

pub fn write_trajectories<W: Write>(mut out: W, trajectories: &[Trajectory]) -> Result<()> {
    for t in trajectories {
        serde_json::to_writer(&mut out, &TrajectoryRecord::from(t))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectories<R: BufRead>(input: R) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrajectoryRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Malformed(format!("line {}: {e}", k + 1)))?;
        out.push(record.try_into()?);
    }
    Ok(out)
}

pub fn write_demos(dir: &Path, manifest: &DemoManifest, trajectories: &[Trajectory]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut out = BufWriter::new(File::create(dir.join(DEMO_FILE))?);
    write_trajectories(&mut out, trajectories)?;
    out.flush()?;
    let mut manifest_json = serde_json::to_string_pretty(manifest)?;
    manifest_json.push('\n');
    fs::write(dir.join(MANIFEST_FILE), manifest_json)?;
    Ok(())
}

pub fn load_demos(dir: &Path) -> Result<DemoSet> {
    let manifest: DemoManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format_version != DEMO_FORMAT_VERSION {
        return Err(Error::Malformed(format!(
            "demo format version {} (expected {DEMO_FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let trajectories = read_trajectories(BufReader::new(File::open(dir.join(DEMO_FILE))?))?;
    if trajectories.len() != manifest.count {
        return Err(Error::Malformed(format!(
            "manifest lists {} demos, file has {}",
            manifest.count,
            trajectories.len()
        )));
    }
    let (sd, ad) = (manifest.env.state_dim(), manifest.env.action_dim());
    for t in &trajectories {
        if t.is_empty() || t.transitions.iter().any(|x| x.state.len() != sd || x.action.len() != ad) {
            return Err(Error::Malformed("demo widths do not match the environment".into()));
        }
    }
    Ok(DemoSet {
        manifest,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_line_shape() {
        let t = Trajectory {
            transitions: vec![Transition {
                state: vec![0.25, 0.5],
                action: vec![1.0, 0.0, 0.0, 0.0],
                env_reward: -1.0,
                next_state: vec![0.375, 0.5],
                done: false,
            }],
            episode_return: -3.0,
        };
        let mut buf = Vec::new();
        let t_copy = t.clone();
        write_trajectories(&mut buf, &[t.clone(), t]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(v["states"][0][1], 0.5);
        assert_eq!(v["actions"][0][0], 1.0);
        assert_eq!(v["env_rewards"][0], -1.0);
        assert_eq!(v["episode_return"], -3.0);
        let back = read_trajectories(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], t_copy);
    }

    #[test]
    fn rejects_ragged_record() {
        let line = br#"{"states":[[0.0,0.0]],"actions":[],"env_rewards":[-1.0],"episode_return":-1.0}"#;
        assert!(read_trajectories(&line[..]).is_err());
    }
}
