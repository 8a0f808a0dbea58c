mod cli;
mod commands;
mod config;
mod expr;
mod output;

use std::process::ExitCode;

use clap::Parser;

use crate::cli::{Cli, Command};
use crate::output::Sink;

/// Failures mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or I/O (exit 2)
    Usage(String),
    /// A sampler gave up (exit 3)
    Simulation(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Simulation(m) => f.write_str(m),
        }
    }
}

impl From<condflow::Error> for CliError {
    fn from(e: condflow::Error) -> Self {
        if e.is_simulation_failure() {
            CliError::Simulation(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

const EXIT_USAGE: u8 = 2;
const EXIT_SIMULATION: u8 = 3;

fn config_value(cli: &Cli) -> serde_json::Value {
    let args = match &cli.command {
        Command::Gamma(a) => serde_json::to_value(a),
        Command::Meander(a) => serde_json::to_value(a),
        Command::Cluster(a) => serde_json::to_value(a),
        Command::Flow(a) => serde_json::to_value(a),
        Command::Drifted(a) => serde_json::to_value(a),
        Command::Validate(a) => serde_json::to_value(a),
    }
    .unwrap_or(serde_json::Value::Null);
    serde_json::json!({
        "command": cli.command.name(),
        "seed": cli.global.seed,
        "format": cli.global.format,
        "args": args,
    })
}

fn run(cli: Cli) -> Result<u8, CliError> {
    if let Some(t) = cli.global.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let sink = Sink {
        format: cli.global.format,
        out: cli.global.out.clone(),
        summary: cli.global.summary.clone(),
        config: config_value(&cli),
    };
    let seed = cli.global.seed;
    match &cli.command {
        Command::Gamma(a) => commands::gamma(a, &sink)?,
        Command::Meander(a) => commands::meander(a, seed, &sink)?,
        Command::Cluster(a) => commands::cluster(a, seed, &sink)?,
        Command::Flow(a) => commands::flow(a, seed, &sink)?,
        Command::Drifted(a) => commands::drifted(a, seed, &sink)?,
        Command::Validate(a) => {
            let failed = commands::validate(a, seed, &sink)?;
            if failed > 0 {
                return Ok((3 + failed).min(125) as u8);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let args = match config::expand_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => EXIT_USAGE,
                CliError::Simulation(_) => EXIT_SIMULATION,
            })
        }
    }
}
