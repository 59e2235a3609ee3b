use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::nm::NmConfig;
use crate::train::MethodKind;

use super::config::{Command, Overrides};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliCommand {
    Train,
    Sim,
    Sched,
    Flops,
}

impl From<CliCommand> for Command {
    fn from(c: CliCommand) -> Self {
        match c {
            CliCommand::Train => Command::Train,
            CliCommand::Sim => Command::Sim,
            CliCommand::Sched => Command::Sched,
            CliCommand::Flops => Command::Flops,
        }
    }
}

/// N:M sparse training, accelerator simulation and scheduling.
#[derive(Debug, Clone, Parser)]
#[command(name = "nmsat", version)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: CliCommand,
    /// Experiment or model JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// dense, srste, sdwp, sdgp or bdwp.
    #[arg(long)]
    pub method: Option<MethodKind>,
    /// Sparsity pattern, e.g. 2:8.
    #[arg(long)]
    pub nm: Option<NmConfig>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            method: self.method,
            nm: self.nm,
            seed: self.seed,
            out: self.out.clone(),
        }
    }
}
