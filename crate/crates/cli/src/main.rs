//! `etherstar`: semiclassical star products and evolution on flat space and the sphere.
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 on invalid
//! input or configuration, 3 when a numerical method fails to converge.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] etherstar_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "etherstar", version, about = "Semiclassical star products and evolution on symplectic models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the randomized invariant suite on a model.
    Check(RunConfig),
    /// Evaluate the semiclassical kernel at (x, y, z) over a grid of z.
    Kernel(RunConfig),
    /// Evaluate the star product of two symbols over a grid.
    Star(RunConfig),
    /// Evaluate the semiclassical symbol of exp(-itH/hbar) over times and points.
    Evolve(RunConfig),
    /// Test the integrality condition on the symplectic volume.
    QuantizeCheck(RunConfig),
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let (name, flags) = match cli.command {
        Command::Check(c) => ("check", c),
        Command::Kernel(c) => ("kernel", c),
        Command::Star(c) => ("star", c),
        Command::Evolve(c) => ("evolve", c),
        Command::QuantizeCheck(c) => ("quantize-check", c),
    };
    let cfg = RunConfig::resolve(flags)?;
    let outcome = match name {
        "check" => commands::check(&cfg)?,
        "kernel" => commands::kernel(&cfg)?,
        "star" => commands::star(&cfg)?,
        "evolve" => commands::evolve(&cfg)?,
        _ => commands::quantize_check(&cfg)?,
    };
    let mut shown = serde_json::to_value(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(obj) = shown.as_object_mut() {
        obj.insert("manifold".into(), cfg.manifold()?.to_string().into());
        obj.remove("output");
    }
    let text = output::render(name, shown, &outcome, cfg.format())?;
    output::emit(&text, cfg.output.as_deref())?;
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
