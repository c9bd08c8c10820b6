//! Configuration-driven front end for the `jumpfb` library: reads a JSON
//! run description, executes one task and writes CSV files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod run;
pub mod table;

pub use config::{canonical, parse, RunConfig};
pub use error::CliError;
pub use run::{execute, run, RunReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Reads and parses a configuration file.
pub fn load(path: &std::path::Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text)
}

/// Parses the configuration and builds its model and weights without
/// running the task.
pub fn validate_config(config: &RunConfig) -> Result<(), CliError> {
    let resolved = config::resolve_model(&config.model)?;
    let model = resolved.build()?;
    if let Some(w) = &config.weights {
        w.build(&resolved, &model)?;
    }
    if let Some(config::InitialSpec::Product { memory, state }) = &config.initial {
        config::memory_distribution(&model, memory)?;
        state.build(model.dim())?;
    }
    Ok(())
}
