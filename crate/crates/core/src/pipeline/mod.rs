//! Stage orchestration: a single config file drives subcommands that
//! communicate through artifacts with provenance records.

pub mod artifacts;
pub mod config;
pub mod stages;

pub use artifacts::{atomic_write, require_artifact, sha256_file, sha256_hex, Provenance, StageLock};
pub use config::{PipelineConfig, Preset, OUT_ENV};
pub use stages::{names, run_stage, read_polarity, read_predictions, Stage, StageReport, TransferReport};
