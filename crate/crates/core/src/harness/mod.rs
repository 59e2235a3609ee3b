//! Command-line entry points and report emission.

mod cli;
mod commands;
mod config;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;
use serde::Serialize;

use crate::error::Error;

pub use cli::{Cli, CliCommand};
pub use commands::{cmd_flops, cmd_sched, cmd_sim, cmd_train, Artifacts, SimSummary, TrainSummary};
pub use config::{Command, ExperimentConfig, Overrides};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Machine-readable failure report written to stderr.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub module: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub op: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<u64>,
}

impl ErrorReport {
    pub fn from_error(e: &Error) -> Self {
        let mut r = ErrorReport {
            code: "E_RUNTIME",
            message: e.to_string(),
            module: None,
            op: None,
            step: None,
        };
        match e {
            Error::Config(_) | Error::Domain(_) | Error::Format(_) | Error::Json(_) => {
                r.code = "E_CONFIG"
            }
            Error::Contract { module, op, .. } => {
                r.code = "E_INTERNAL";
                r.module = Some(module);
                r.op = Some(op);
            }
            Error::Shape(_) => r.code = "E_INTERNAL",
            Error::Divergence { step, .. } => r.step = Some(*step),
            Error::Io(_) | Error::Csv(_) => {}
        }
        r
    }

    pub fn exit_code(&self) -> i32 {
        if self.code == "E_CONFIG" {
            EXIT_CONFIG
        } else {
            EXIT_RUNTIME
        }
    }
}

/// Reads `NMSAT_LOG` (error, info or debug; default error).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("NMSAT_LOG", "error");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
}

/// Runs a parsed command; returns a one-line summary for stdout.
pub fn execute(cli: &Cli) -> crate::Result<String> {
    let cfg = ExperimentConfig::load(&cli.config)?.apply(&cli.overrides());
    let command: Command = cli.command.into();
    log::info!("{} with {}", command.as_str(), cli.config.display());
    let line = match command {
        Command::Train => {
            let (runs, _) = cmd_train(&cfg, cli.jobs)?;
            runs.iter()
                .map(|r| format!("seed {} final_loss {:.6}", r.seed, r.final_loss))
                .collect::<Vec<_>>()
                .join("\n")
        }
        Command::Sim => {
            let (s, _) = cmd_sim(&cfg)?;
            format!(
                "total_cycles {} dense_total_cycles {} speedup {:.4}",
                s.total_cycles, s.dense_total_cycles, s.speedup
            )
        }
        Command::Sched => {
            let (doc, _) = cmd_sched(&cfg)?;
            format!(
                "words {} predicted_total_cycles {}",
                doc.schedule.as_ref().map_or(0, Vec::len),
                doc.predicted_total_cycles.unwrap_or(0)
            )
        }
        Command::Flops => {
            let (t, _) = cmd_flops(&cfg)?;
            format!(
                "dense {:.6e} actual {:.6e} ratio {:.4}",
                t.step.dense, t.step.actual, t.ratio
            )
        }
    };
    Ok(line)
}

/// Full CLI behavior: parse, run, report. Returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
        Err(e) => {
            let r = ErrorReport {
                code: "E_CONFIG",
                message: e.to_string().trim().to_string(),
                module: None,
                op: None,
                step: None,
            };
            let _ = writeln!(
                stderr,
                "{}",
                serde_json::to_string(&r).expect("error report")
            );
            return EXIT_CONFIG;
        }
    };
    match execute(&cli) {
        Ok(line) => {
            let _ = writeln!(stdout, "{line}");
            EXIT_OK
        }
        Err(e) => {
            let r = ErrorReport::from_error(&e);
            let _ = writeln!(
                stderr,
                "{}",
                serde_json::to_string(&r).expect("error report")
            );
            r.exit_code()
        }
    }
}
