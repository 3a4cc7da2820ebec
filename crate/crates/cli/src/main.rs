use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phasepic::config::{Mode, RunConfig};
use phasepic::converge::run_convergence_study;
use phasepic::error::CliError;
use phasepic::run::{load_config, simulate, summary_text};
use phasepic_core::problems::ProblemKind;

/// Particle-in-cell Vlasov-Poisson solver with phase-space remapping.
///
/// The worker count comes from the `workers` key, else from the
/// PHASEPIC_WORKERS environment variable, else from the number of cores.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration; `--key=value` flags override the file.
    Simulate {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Richardson study: the configuration is the finest of three resolutions.
    Converge {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print a preset configuration (landau, twostream or beam).
    Preset { name: String },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, overrides } => {
            let c = load_config(&config, &overrides)?;
            if c.mode == Mode::Converge {
                return converge(&c);
            }
            let out = simulate(&c)?;
            print!("{}", summary_text(&out.report, None));
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Converge { config, overrides } => converge(&load_config(&config, &overrides)?)?,
        Command::Preset { name } => {
            let kind = ProblemKind::parse(&name).map_err(|e| CliError::Config(e.to_string()))?;
            print!("{}", RunConfig::preset(kind).manifest());
        }
    }
    Ok(())
}

fn converge(c: &RunConfig) -> Result<(), CliError> {
    let out = run_convergence_study(c)?;
    print!("{}", out.table.csv());
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
