//! Checkpoints: one little-endian parameter blob per network plus a JSON
//! sidecar with everything needed to rebuild it.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sil_core::env::RunningNormalizer;
use sil_core::nn::{read_params, write_params};
use sil_core::policy::Agent;
use sil_core::{Activation, CriticParams, MlpSpec, ParameterVector, PolicyHead, PolicyParams, ValueParams};

use crate::CliError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicySidecar {
    version: u32,
    iteration: usize,
    activation: Activation,
    head: PolicyHead,
    /// Raw (unclamped) log standard deviations; empty for categorical heads.
    log_std: Vec<f64>,
    normalizer: RunningNormalizer,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetSidecar {
    version: u32,
    iteration: usize,
    activation: Activation,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    learning_rate: Option<f64>,
}

fn write_blob(path: &Path, spec: &MlpSpec, params: &[f64]) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_params(&mut out, spec, params)?;
    out.flush()?;
    Ok(())
}

fn read_blob(path: &Path, activation: Activation) -> Result<(MlpSpec, ParameterVector), CliError> {
    let (widths, params) = read_params(BufReader::new(File::open(path)?))?;
    Ok((MlpSpec::new(widths, activation)?, params))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(sil_core::Error::from)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn save_agent(dir: &Path, agent: &Agent, iteration: usize) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let p = &agent.policy;
    write_blob(&dir.join("policy.bin"), &p.spec, p.net_params())?;
    write_json(
        &dir.join("policy.json"),
        &PolicySidecar {
            version: CHECKPOINT_VERSION,
            iteration,
            activation: p.spec.activation,
            head: p.head.clone(),
            log_std: p.params[p.net_len()..].to_vec(),
            normalizer: agent.normalizer.clone(),
        },
    )
}

pub fn load_agent(dir: &Path) -> Result<Agent, CliError> {
    let side: PolicySidecar = read_json(&dir.join("policy.json"))?;
    if side.version != CHECKPOINT_VERSION {
        return Err(CliError::Config(format!("checkpoint version {} is not supported", side.version)));
    }
    let (spec, net) = read_blob(&dir.join("policy.bin"), side.activation)?;
    let expected_std = match side.head {
        PolicyHead::Categorical => 0,
        PolicyHead::Gaussian { .. } => spec.output_width(),
    };
    if side.log_std.len() != expected_std || side.normalizer.width() != spec.input_width() {
        return Err(CliError::Config(format!("{}: sidecar does not match the network", dir.display())));
    }
    let mut params = net.into_inner();
    params.extend(side.log_std);
    let policy = PolicyParams {
        spec,
        params: ParameterVector(params),
        head: side.head,
    };
    Ok(Agent::new(policy, side.normalizer))
}

pub fn save_critic(dir: &Path, critic: &CriticParams, iteration: usize) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_blob(&dir.join("critic.bin"), &critic.spec, &critic.params)?;
    write_json(
        &dir.join("critic.json"),
        &NetSidecar {
            version: CHECKPOINT_VERSION,
            iteration,
            activation: critic.spec.activation,
            learning_rate: Some(critic.learning_rate),
        },
    )
}

pub fn load_critic(dir: &Path) -> Result<CriticParams, CliError> {
    let side: NetSidecar = read_json(&dir.join("critic.json"))?;
    let (spec, params) = read_blob(&dir.join("critic.bin"), side.activation)?;
    Ok(CriticParams {
        spec,
        params,
        learning_rate: side.learning_rate.unwrap_or_default(),
    })
}

pub fn save_value(dir: &Path, value: &ValueParams, iteration: usize) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_blob(&dir.join("value.bin"), &value.spec, &value.params)?;
    write_json(
        &dir.join("value.json"),
        &NetSidecar {
            version: CHECKPOINT_VERSION,
            iteration,
            activation: value.spec.activation,
            learning_rate: None,
        },
    )
}
