//! Configuration, experiment drivers and CSV output for the `raceway` tool.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::Path;
use std::time::Instant;

use raceway_core::ModelError;
use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig};
pub use experiments::Experiment;
pub use output::RunManifest;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),

    #[error("{context}: {source}")]
    Model {
        context: &'static str,
        source: ModelError,
    },

    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub(crate) fn model(context: &'static str) -> impl Fn(ModelError) -> RunError {
        move |source| RunError::Model { context, source }
    }

    /// Process exit status: 2 configuration, 3 model, 4 IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(ConfigError::Io { .. }) => 4,
            RunError::Config(_) => 2,
            RunError::Model {
                source: ModelError::InvalidParameter { .. },
                ..
            } => 2,
            RunError::Model { .. } => 3,
            RunError::Io(_) => 4,
        }
    }
}

/// Runs one experiment, writing its CSV files and `manifest.json` into `out`.
pub fn run_experiment(
    exp: Experiment,
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<RunManifest, RunError> {
    let start = Instant::now();
    let mut dir = output::OutputDir::create(out)?;
    let termination = experiments::dispatch(exp, cfg, &mut dir)?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        experiment: exp.name().to_owned(),
        seed: cfg.seed,
        config: cfg.echo(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        termination,
        files: dir.files().to_vec(),
    };
    manifest.write(&dir.root().join("manifest.json"))?;
    Ok(manifest)
}
