//! Command-line driver: config ingestion, the `estimate`, `verify`, `sweep`
//! and `oracle` commands, and their CSV/JSON reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod presets;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_estimate, cmd_oracle, cmd_sweep, cmd_verify, Outcome};
pub use config::{RunConfig, SCHEMA_VERSION};
pub use error::Failure;

#[derive(Debug, Parser)]
#[command(name = "upressure", version, about = "Unstable pressure estimates and certificates on torus maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pressure table and estimate.
    Estimate(RunArgs),
    /// Certificate and configured checks.
    Verify(RunArgs),
    /// One estimate per value of the sweep axis.
    Sweep(RunArgs),
    /// Interval DPs against brute-force enumeration.
    Oracle(RunArgs),
    /// List the built-in presets, or print one.
    Presets { name: Option<String> },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML config, or JSON when the extension is `.json`.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in config; see `upressure presets`.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the seeds of the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl RunArgs {
    pub fn load(&self) -> Result<RunConfig, Failure> {
        let cfg = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => {
                let p = presets::find(name)
                    .ok_or_else(|| Failure::usage(Some("--preset".into()), format!("unknown preset {name:?}")))?;
                RunConfig::parse(p.text, config::Format::Toml)?
            }
            (None, None) => {
                return Err(Failure::usage(None, "one of --config or --preset is required".into()));
            }
        };
        Ok(match self.seed {
            Some(s) => cfg.with_seed(s),
            None => cfg,
        })
    }

    pub fn out_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

type CommandFn = fn(&RunConfig, &std::path::Path) -> Result<Outcome, Failure>;

/// Runs a parsed command. `Ok` carries the text for stdout.
pub fn run(cli: &Cli) -> Result<String, Failure> {
    let (args, f): (&RunArgs, CommandFn) = match &cli.command {
        Command::Presets { name: None } => {
            let width = presets::PRESETS.iter().map(|p| p.name.len()).max().unwrap_or(0);
            return Ok(presets::PRESETS
                .iter()
                .map(|p| format!("{:width$}  {:8}  {}\n", p.name, p.command, p.summary))
                .collect());
        }
        Command::Presets { name: Some(n) } => {
            return presets::find(n)
                .map(|p| p.text.to_string())
                .ok_or_else(|| Failure::usage(Some("name".into()), format!("unknown preset {n:?}")));
        }
        Command::Estimate(a) => (a, cmd_estimate),
        Command::Verify(a) => (a, cmd_verify),
        Command::Sweep(a) => (a, cmd_sweep),
        Command::Oracle(a) => (a, cmd_oracle),
    };
    if args.jobs == Some(0) {
        return Err(Failure::usage(Some("--jobs".into()), "must be >= 1".into()));
    }
    let cfg = args.load()?;
    let out = args.out_dir(&cfg);
    let outcome = match args.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Failure::Io(e.to_string()))?
            .install(|| f(&cfg, &out))?,
        None => f(&cfg, &out)?,
    };
    let mut text = outcome.message;
    for p in &outcome.files {
        text.push_str(&format!("\nwrote {}", p.display()));
    }
    text.push('\n');
    Ok(text)
}
