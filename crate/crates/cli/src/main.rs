use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lachesis_cli::{export_dot, parse_seeds, simulate, verify, CliError, Format, FrameRange, Model, SimulateOptions};
use lachesis_sim::SimConfig;

#[derive(Parser)]
#[command(name = "lachesis", version, about = "Simulate and verify Lachesis consensus runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write its report, trace, stats, log and DOT files.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; without it the chosen --format goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the seed in the config.
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Runs several seeds, e.g. 0..20; each gets its own subdirectory.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        frames: Option<String>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Rebuild a chain from an event log and check it against the oracles.
    Verify {
        log: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Render an event log as a DOT graph.
    ExportDot {
        log: PathBuf,
        #[arg(long)]
        frames: Option<String>,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
}

/// Network parameters for rebuilding a log; inferred from the log when absent.
#[derive(Args)]
struct ModelArgs {
    /// Take n, k and h from a simulation config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "config")]
    n: Option<usize>,
    #[arg(long, conflicts_with = "config")]
    k: Option<usize>,
    #[arg(long, conflicts_with = "config")]
    h: Option<u32>,
}

impl ModelArgs {
    fn resolve(&self, log: &std::path::Path) -> Result<Option<Model>, CliError> {
        if let Some(path) = &self.config {
            return Ok(Some(Model::from_config(&SimConfig::load(path)?)));
        }
        if self.n.is_none() && self.k.is_none() && self.h.is_none() {
            return Ok(None);
        }
        let guess = Model::infer(&lachesis_cli::read_events(log)?);
        Ok(Some(Model { n: self.n.unwrap_or(guess.n), k: self.k.unwrap_or(guess.k), h: self.h.unwrap_or(guess.h) }))
    }
}

fn frames(arg: &Option<String>) -> Result<Option<FrameRange>, CliError> {
    Ok(arg.as_deref().map(str::parse).transpose()?)
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    let mut stdout = io::stdout().lock();
    let mut stderr = io::stderr().lock();
    match cli.command {
        Command::Simulate { config, out, seed, seeds, frames: range, format } => {
            let opts = SimulateOptions {
                config,
                out,
                seed,
                seeds: seeds.as_deref().map(parse_seeds).transpose()?,
                frames: frames(&range)?,
                format,
            };
            Ok(simulate(&opts, &mut stdout, &mut stderr)?.exit_code())
        }
        Command::Verify { log, model } => {
            let model = model.resolve(&log)?;
            Ok(verify(&log, model, &mut stdout)?.exit_code())
        }
        Command::ExportDot { log, frames: range, out, model } => {
            let model = model.resolve(&log)?;
            let dot = export_dot(&log, model, frames(&range)?.as_ref())?;
            match out {
                Some(path) => std::fs::write(&path, dot).map_err(|source| CliError::Io { path, source })?,
                None => stdout
                    .write_all(dot.as_bytes())
                    .map_err(|source| CliError::Io { path: "<stdout>".into(), source })?,
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
