//! Configuration, sweep orchestration, persistence and self-checks for the
//! `irs-d2d` command-line tool.

pub mod config;
pub mod error;
pub mod output;
pub mod sweep;
pub mod verify;

pub use config::{emit_config, parse_config, parse_override, ConfigDoc, ExperimentSpec, SweepKind};
pub use error::HarnessError;
pub use output::{emit_results, Manifest};
pub use sweep::{run_sweep, SweepRow};
