//! Configuration, staged runs, manifests and run comparison behind the
//! `cylinder-rds` command.

pub mod config;
pub mod manifest;
pub mod pipeline;

pub use config::{Config, Stage};
pub use manifest::{compare_runs, RunDiff, RunManifest};
pub use pipeline::{replay, run_pipeline, ReplayReport, RunOptions};

use crate::error::Error;

/// Process exit codes of the command-line tool.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const ACCEPTANCE_FAILURE: i32 = 1;
    pub const CONFIG_ERROR: i32 = 2;
    pub const RUNTIME_FAILURE: i32 = 3;
}

/// Exit code for a finished run.
pub fn exit_code(manifest: &RunManifest) -> i32 {
    if !manifest.complete() {
        exit::RUNTIME_FAILURE
    } else if !manifest.accepted() {
        exit::ACCEPTANCE_FAILURE
    } else {
        exit::PASS
    }
}

/// Exit code for an error raised before or outside the stages.
pub fn error_exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => exit::CONFIG_ERROR,
        _ => exit::RUNTIME_FAILURE,
    }
}
