//! Configuration, output files and the convergence harness behind the
//! `phasepic` command.

pub mod config;
pub mod converge;
pub mod error;
pub mod output;
pub mod run;

pub use config::{parse_config, Mode, RunConfig};
pub use error::CliError;
