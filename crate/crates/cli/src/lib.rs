//! Library surface of the CLI: subcommand entry points and the run manifest,
//! kept callable so integration tests can drive commands in-process.

pub mod commands;
pub mod manifest;

pub use commands::{cmd_compare, cmd_diagram, cmd_quantize, cmd_run, cmd_solve, exit_code};
pub use manifest::{ManifestBuilder, OutputEntry, PhaseEntry, RunManifest};
