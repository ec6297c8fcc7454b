//! `htfstab`: generate oracle sideband data, identify the truncated
//! harmonic transfer function, sweep a stabilization resistor and plot the
//! resulting pole loci.

pub mod args;
pub mod bench;
pub mod commands;
pub mod config;
pub mod pipeline;
pub mod svg;

use anyhow::{Context, Result};

use crate::args::{Cli, Command};
use crate::config::ConfigFile;

/// Worker-count variable honoured by every command.
pub const WORKERS_ENV: &str = "HTFSTAB_WORKERS";

pub type Warnings = Vec<String>;

pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got '{v}'"))?;
            anyhow::ensure!(n > 0, "{WORKERS_ENV} must be positive");
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Warning,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Error => 1,
            Status::Warning => 2,
        }
    }

    /// Final line printed by every invocation.
    pub fn line(self, detail: Option<&str>) -> String {
        let word = match self {
            Status::Ok => "ok",
            Status::Warning => "warning",
            Status::Error => "error",
        };
        match detail {
            Some(d) => format!("status={word} exit={} detail={d:?}", self.exit_code()),
            None => format!("status={word} exit={}", self.exit_code()),
        }
    }
}

pub fn run(cli: &Cli) -> Result<Warnings> {
    let cfg = ConfigFile::load_optional(cli.config.as_deref())?;
    match &cli.command {
        Command::OracleGen(a) => commands::oracle_gen(a, &cfg),
        Command::Identify(a) => commands::identify(a, &cfg),
        Command::Sweep(a) => commands::sweep(a, &cfg),
        Command::OracleSweep(a) => commands::oracle_sweep(a, &cfg),
        Command::Plot(a) => commands::plot(a, &cfg),
        Command::Bench(a) => commands::bench(a, &cfg),
    }
}
