//! Experiment runner behind the `coarsekit` command.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod presets;

pub use config::{ExperimentConfig, Method};
pub use error::CliError;
pub use experiments::run;
pub use output::{Metrics, RunOutput};
pub use presets::{preset, reproduce, Expect, FigurePreset, PresetOutcome, PRESET_IDS};

/// Cap rayon's worker count; `None` leaves the default.
pub fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}
