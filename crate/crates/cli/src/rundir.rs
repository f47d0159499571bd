//! Run directory layout:
//!
//! ```text
//! <run>/config.json      resolved configuration
//! <run>/manifest.json    schema version, program version, seeds, demo provenance
//! <run>/metrics.csv      one row per iteration, appended and flushed as it happens
//! <run>/timing.csv       iter,wall_clock_s
//! <run>/diagnostics.csv  reward identity error, shaped reward range, solver health
//! <run>/checkpoints/     iter_NNNNNN/ and final/, each network as .bin + .json
//! <run>/eval/final.json  final report
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sil_core::env::DemoManifest;
use sil_core::sil::METRICS_HEADER;
use sil_core::{EvalReport, MetricsRow};

use crate::config::RunConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const DIAGNOSTICS_HEADER: &str = "iter,identity_error,shaped_min,shaped_max,unconverged_pairs,critic_skipped";
pub const FINAL_EVAL_FILE: &str = "eval/final.json";

pub fn version_string() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), env!("SIL_GIT_DESCRIBE"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub version: String,
    pub method: String,
    pub seed: u64,
    pub threads: usize,
    pub env: String,
    pub demo_count: usize,
    pub demos: DemoManifest,
    pub metrics_header: String,
}

/// Final evaluation of a run: the Sinkhorn metric on stochastic rollouts and
/// ground-truth return on deterministic ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalEval {
    pub method: String,
    pub env: String,
    pub demo_count: usize,
    pub seed: u64,
    pub sinkhorn: EvalReport,
    pub reward: EvalReport,
}

pub struct RunDir {
    root: PathBuf,
    metrics: Option<File>,
    timing: Option<File>,
    diagnostics: Option<File>,
}

/// Per-iteration numerical health of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub iter: usize,
    pub identity_error: f64,
    pub shaped_min: f64,
    pub shaped_max: f64,
    pub unconverged_pairs: usize,
    pub critic_skipped: bool,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(sil_core::Error::from)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

impl RunDir {
    /// Creates the directory and writes the config and manifest. Refuses to
    /// reuse a directory that already holds results.
    pub fn create(root: &Path, config: &RunConfig, manifest: &RunManifest) -> Result<Self, CliError> {
        for f in [METRICS_FILE, FINAL_EVAL_FILE] {
            if root.join(f).exists() {
                return Err(CliError::Config(format!("{} already contains a run", root.display())));
            }
        }
        fs::create_dir_all(root.join("checkpoints"))?;
        fs::create_dir_all(root.join("eval"))?;
        write_json(&root.join(CONFIG_FILE), config)?;
        write_json(&root.join(MANIFEST_FILE), manifest)?;
        Ok(Self {
            root: root.to_path_buf(),
            metrics: None,
            timing: None,
            diagnostics: None,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn checkpoint_dir(&self, iteration: Option<usize>) -> PathBuf {
        match iteration {
            Some(k) => self.root.join("checkpoints").join(format!("iter_{k:06}")),
            None => self.root.join("checkpoints").join("final"),
        }
    }

    fn open_with_header(path: &Path, header: &str) -> Result<File, CliError> {
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(header.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(f)
    }

    /// Appends one row; each row is a single write so an interrupted run
    /// leaves only complete lines.
    pub fn append_metrics(&mut self, row: &MetricsRow) -> Result<(), CliError> {
        if self.metrics.is_none() {
            self.metrics = Some(Self::open_with_header(&self.root.join(METRICS_FILE), METRICS_HEADER)?);
        }
        let f = self.metrics.as_mut().expect("opened above");
        f.write_all(format!("{}\n", row.to_csv()).as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn append_timing(&mut self, iteration: usize, seconds: f64) -> Result<(), CliError> {
        if self.timing.is_none() {
            self.timing = Some(Self::open_with_header(&self.root.join(TIMING_FILE), "iter,wall_clock_s")?);
        }
        let f = self.timing.as_mut().expect("opened above");
        f.write_all(format!("{iteration},{seconds:.6}\n").as_bytes())?;
        Ok(())
    }

    pub fn append_diagnostics(&mut self, d: &Diagnostics) -> Result<(), CliError> {
        if self.diagnostics.is_none() {
            self.diagnostics = Some(Self::open_with_header(&self.root.join(DIAGNOSTICS_FILE), DIAGNOSTICS_HEADER)?);
        }
        let f = self.diagnostics.as_mut().expect("opened above");
        let line = format!(
            "{},{},{},{},{},{}\n",
            d.iter, d.identity_error, d.shaped_min, d.shaped_max, d.unconverged_pairs, d.critic_skipped as u8
        );
        f.write_all(line.as_bytes())?;
        Ok(())
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        fs::write(self.root.join(name), text)?;
        Ok(())
    }

    pub fn write_final(&self, report: &FinalEval) -> Result<(), CliError> {
        write_json(&self.root.join(FINAL_EVAL_FILE), report)
    }
}

/// Parses a metrics file, ignoring a trailing partial line.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, CliError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.split_inclusive('\n');
    match lines.next() {
        Some(h) if h.trim_end() == METRICS_HEADER => {}
        _ => return Err(CliError::Config(format!("{}: unexpected header", path.display()))),
    }
    lines
        .filter(|l| l.ends_with('\n'))
        .map(|l| MetricsRow::parse_csv(l).map_err(CliError::from))
        .collect()
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<Diagnostics>, CliError> {
    let text = fs::read_to_string(path)?;
    let bad = |l: &str| CliError::Config(format!("{}: bad diagnostics line {l:?}", path.display()));
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(bad(l));
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad(l));
            Ok(Diagnostics {
                iter: f[0].parse().map_err(|_| bad(l))?,
                identity_error: num(1)?,
                shaped_min: num(2)?,
                shaped_max: num(3)?,
                unconverged_pairs: f[4].parse().map_err(|_| bad(l))?,
                critic_skipped: f[5] == "1",
            })
        })
        .collect()
}

pub fn read_final(run: &Path) -> Result<FinalEval, CliError> {
    let bytes = fs::read(run.join(FINAL_EVAL_FILE))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", run.display())))
}
