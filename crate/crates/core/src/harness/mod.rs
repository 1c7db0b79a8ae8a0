//! Experiment plumbing: configuration, the bench sweep with its CSV
//! output, and the built-in verification batteries.

mod bench;
mod config;
pub mod verify;

pub use bench::{run_bench, BenchError, MetricsRow, CSV_HEADER, CSV_VERSION};
pub use config::{
    parse_flush_mode, parse_variant, ConfigError, ExperimentConfig, ProfileKind, SWEEP_FRACTIONS,
};
pub use verify::{run_verify, FaultHook, SuiteKind, SuiteResult, VerifyOptions};
