use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sil_cli::commands::{self, Method};
use sil_cli::config::{Overrides, RunConfig};
use sil_cli::CliError;

#[derive(Parser)]
#[command(name = "sil", version, about = "Sinkhorn imitation learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory (parent directory when the config lists demo counts).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 is bit-exact across machines.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<(RunConfig, PathBuf), CliError> {
        let (mut config, base) = RunConfig::load(&self.config)?;
        config.apply(&Overrides {
            seed: self.seed,
            out: self.out.clone(),
            threads: self.threads,
            eval_every: self.eval_every,
            checkpoint_every: self.checkpoint_every,
        });
        Ok((config, base))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Record demonstrations from an environment's scripted expert.
    GenExpert {
        #[arg(long)]
        env: String,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        subsample_factor: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train with the adversarial critic.
    TrainSil(RunArgs),
    /// Train the behavioral-cloning baseline.
    TrainBc(RunArgs),
    /// Train with the fixed cosine cost instead of the critic.
    Ablate(RunArgs),
    /// Evaluate a saved policy checkpoint.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint directory holding policy.bin and policy.json.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Tabulate final reports of finished runs as CSV.
    Compare {
        /// Run directories, or parents of run directories.
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_dirs(dirs: &[PathBuf]) {
    for d in dirs {
        println!("{}", d.display());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenExpert {
            env,
            count,
            subsample_factor,
            seed,
            out,
        } => commands::gen_expert(&env, count, subsample_factor, seed, &out),
        Command::TrainSil(args) => {
            let (config, base) = args.load()?;
            print_dirs(&commands::train(&config, &base, Method::Sil)?);
            Ok(())
        }
        Command::Ablate(args) => {
            let (config, base) = args.load()?;
            print_dirs(&commands::train(&config, &base, Method::Ablation)?);
            Ok(())
        }
        Command::TrainBc(args) => {
            let (config, base) = args.load()?;
            print_dirs(&commands::train_bc(&config, &base)?);
            Ok(())
        }
        Command::Evaluate { run, checkpoint, report } => {
            let (config, base) = run.load()?;
            let result = commands::evaluate_checkpoint(&config, &base, &checkpoint)?;
            let text = serde_json::to_string_pretty(&result).map_err(sil_core::Error::from)? + "\n";
            match report {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Compare { runs, out } => {
            let table = commands::compare(&commands::collect_runs(&runs)?)?;
            match out {
                Some(path) => std::fs::write(path, table)?,
                None => print!("{table}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
