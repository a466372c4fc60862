//! Command-line runner: flags and config files become a [`RunManifest`],
//! which [`run`] dispatches to the experiments in `escapade-core`.

pub mod args;
pub mod error;
pub mod manifest;
pub mod output;
pub mod run;

pub use args::Cli;
pub use error::CliError;
pub use manifest::{RunManifest, Task};
pub use run::{run, Report, Verdict};
