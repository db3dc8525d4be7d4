//! Command implementations behind the `dxstream` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod fsio;
pub mod manifest;

pub use commands::{
    cmd_build_candidates, cmd_gen_synthetic, cmd_metrics, cmd_run, cmd_validate_schema, BuildCandidatesArgs,
    GenSyntheticArgs, MetricsOutput, RunResult, SchemaKind, ScorerKind,
};
pub use config::{RunConfig, Task};
pub use error::CliError;
pub use manifest::{RunManifest, RunStatus};
