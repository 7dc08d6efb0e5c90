//! Experiment pipeline behind the `gamespace` command.

pub mod analyze;
pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;
pub mod stages;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{ExperimentConfig, Overrides, Scale};
pub use error::CliError;
pub use manifest::{RunManifest, Workspace};

#[derive(Debug, Parser)]
#[command(name = "gamespace", version, about = "Embed tabletop games into feature spaces and analyse them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment configuration; keys left out come from `--scale`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Scale::Desk)]
    pub scale: Scale,
    /// Keep finished units of an interrupted stage.
    #[arg(long, global = true)]
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Game-tree statistics per environment.
    Attributes,
    /// NTBEA fingerprints per environment.
    Fingerprint,
    /// Roster win rates against the fixed opponents.
    Performance,
    /// Roster win rates in a round-robin tournament.
    Roundrobin,
    /// PCA, clustering tests, CCA and homogeneity tests, plus figures.
    Analyze,
    /// Redraw the figures from existing analysis output.
    Plot,
    /// Every stage in order.
    All,
}

/// Runs `command` on an already resolved configuration.
pub fn execute(command: Command, config: &ExperimentConfig, resume: bool) -> Result<(), CliError> {
    let mut ws = Workspace::open(config, resume)?;
    match command {
        Command::Attributes => stages::cmd_attributes(config, &mut ws),
        Command::Fingerprint => stages::cmd_fingerprint(config, &mut ws),
        Command::Performance => stages::cmd_performance(config, &mut ws),
        Command::Roundrobin => stages::cmd_roundrobin(config, &mut ws),
        Command::Analyze => analyze::cmd_analyze(config, &mut ws),
        Command::Plot => {
            let n = plot::render_all(&mut ws, "plot")?;
            if n == 0 {
                return Err(CliError::Runtime("no analysis output to plot; run `analyze` first".into()));
            }
            ws.finish_stage("plot")
        }
        Command::All => {
            stages::cmd_attributes(config, &mut ws)?;
            stages::cmd_fingerprint(config, &mut ws)?;
            stages::cmd_performance(config, &mut ws)?;
            stages::cmd_roundrobin(config, &mut ws)?;
            analyze::cmd_analyze(config, &mut ws)
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let overrides = Overrides { seed: cli.seed, output: cli.out.clone() };
    let config = ExperimentConfig::load(cli.config.as_deref(), cli.scale, &overrides)?;
    execute(cli.command, &config, cli.resume)
}
