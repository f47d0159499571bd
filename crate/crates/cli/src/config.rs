use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sil_core::env::{generate_demos, load_demos, DemoSet};
use sil_core::eval::{BcConfig, DEFAULT_EVAL_EPISODES};
use sil_core::{EnvSpec, SilConfig};

use crate::CliError;

/// Built-in environment by name, or a full specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvChoice {
    Named(String),
    Spec(EnvSpec),
}

impl EnvChoice {
    pub fn resolve(&self) -> Result<EnvSpec, CliError> {
        let spec = match self {
            EnvChoice::Named(name) => EnvSpec::by_name(name)?,
            EnvChoice::Spec(spec) => spec.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A demo directory on disk, or demos generated from the scripted expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum DemoSource {
    Path { path: PathBuf },
    Generate {
        count: usize,
        subsample_factor: usize,
        seed: u64,
    },
}

impl DemoSource {
    pub fn load(&self, env: &EnvSpec, base: &Path) -> Result<DemoSet, CliError> {
        let demos = match self {
            DemoSource::Path { path } => {
                let path = if path.is_relative() { base.join(path) } else { path.clone() };
                load_demos(&path).map_err(|e| CliError::Config(format!("demos at {}: {e}", path.display())))?
            }
            DemoSource::Generate {
                count,
                subsample_factor,
                seed,
            } => generate_demos(env, *count, *subsample_factor, *seed)?,
        };
        if demos.env() != env {
            return Err(CliError::Config(format!(
                "demos were recorded on a different {} configuration",
                demos.env().name()
            )));
        }
        Ok(demos)
    }
}

fn default_threads() -> usize {
    1
}

fn default_final_episodes() -> usize {
    DEFAULT_EVAL_EPISODES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvChoice,
    pub demos: DemoSource,
    /// One run per count, each on the first `n` demos.
    #[serde(default)]
    pub demo_counts: Vec<usize>,
    /// Demonstrations the final metric compares against; defaults to the
    /// training demos.
    #[serde(default)]
    pub reference_demos: Option<DemoSource>,
    pub seed: u64,
    pub out: PathBuf,
    #[serde(default = "default_threads")]
    pub threads: usize,
    /// Save a checkpoint every this many iterations; 0 saves only the final one.
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default = "default_final_episodes")]
    pub final_eval_episodes: usize,
    #[serde(default)]
    pub sil: SilConfig,
    #[serde(default)]
    pub bc: BcConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub eval_every: Option<usize>,
    pub checkpoint_every: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::from_json(&text)?, base))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(threads) = o.threads {
            self.threads = threads;
        }
        if let Some(e) = o.eval_every {
            self.sil.eval_every = e;
        }
        if let Some(c) = o.checkpoint_every {
            self.checkpoint_every = c;
        }
    }

    /// Everything that can be checked without running anything.
    pub fn validate(&self) -> Result<EnvSpec, CliError> {
        let env = self.env.resolve()?;
        self.sil.validate()?;
        if self.threads == 0 {
            return Err(CliError::Config("threads must be >= 1".into()));
        }
        if self.final_eval_episodes == 0 {
            return Err(CliError::Config("final_eval_episodes must be >= 1".into()));
        }
        if self.demo_counts.contains(&0) {
            return Err(CliError::Config("demo_counts entries must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.bc.holdout_fraction) {
            return Err(CliError::Config("bc.holdout_fraction must lie in [0, 1)".into()));
        }
        if let DemoSource::Generate {
            count,
            subsample_factor,
            ..
        } = &self.demos
        {
            if *count == 0 || *subsample_factor == 0 {
                return Err(CliError::Config("generated demos need count and subsample_factor >= 1".into()));
            }
        }
        Ok(env)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "env": "gridworld",
        "demos": {"count": 2, "subsample_factor": 4, "seed": 0},
        "seed": 3,
        "out": "runs/x"
    }"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.threads, 1);
        assert_eq!(c.final_eval_episodes, 50);
        assert_eq!(c.sil, SilConfig::default());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let typo = MINIMAL.replace("\"seed\": 3", "\"seed\": 3, \"sed\": 1");
        assert!(matches!(RunConfig::from_json(&typo), Err(CliError::Config(_))));
        let nested = MINIMAL.replace("\"seed\": 3", "\"seed\": 3, \"sil\": {\"iteratons\": 4}");
        assert!(RunConfig::from_json(&nested).is_err());
        let demos = MINIMAL.replace("\"seed\": 0}", "\"seed\": 0, \"extra\": 1}");
        assert!(RunConfig::from_json(&demos).is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.apply(&Overrides {
            seed: Some(9),
            eval_every: Some(7),
            ..Overrides::default()
        });
        assert_eq!(c.seed, 9);
        assert_eq!(c.sil.eval_every, 7);
    }

    #[test]
    fn unknown_environment_is_a_config_error() {
        let c = RunConfig::from_json(&MINIMAL.replace("gridworld", "cartpole")).unwrap();
        assert!(matches!(c.validate(), Err(CliError::Core(_))));
    }
}
