//! Configuration, sweep execution, CSV/manifest persistence and SVG figures
//! for `recsim_core` experiments.

pub mod config;
pub mod figures;
pub mod manifest;
pub mod sweep;

pub use config::{load_config, parse_config, Cell, ConfigError, SweepSpec};
pub use figures::emit_figures;
pub use manifest::{RunManifest, MANIFEST_FILE};
pub use sweep::{execute_sweep, run_sweep, write_outputs, RunOptions, SweepResults};
