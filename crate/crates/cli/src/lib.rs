//! Command-line front end: `generate`, `metrics` and `validate`.
//!
//! Exit codes:
//!
//! ```text
//! 0  success
//! 1  i/o or other failure
//! 2  invalid configuration or flags
//! 3  invalid or inconsistent data
//! 4  validation suite reported mismatches
//! ```

pub mod args;
pub mod dataset;
pub mod generate;
pub mod manifest;
pub mod report;

use patchgen_core::retrieval::build_pool;
use patchgen_core::validate::{run_suite, SuiteConfig, SuiteReport};
use patchgen_core::{Error, ErrorKind};

use crate::args::ValidateArgs;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

/// Environment variable holding the worker thread count.
pub const WORKERS_ENV: &str = "PATCHGEN_WORKERS";

#[derive(Debug, thiserror::Error)]
#[error("validation failed: {oracle} retrieval and {overlap} overlap mismatches")]
pub struct ValidationFailed {
    pub oracle: usize,
    pub overlap: usize,
}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ValidationFailed>().is_some() {
            return EXIT_VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e.kind() {
                ErrorKind::Config => EXIT_CONFIG,
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Io => EXIT_OTHER,
            };
        }
    }
    EXIT_OTHER
}

/// Sizes the global rayon pool from [`WORKERS_ENV`] when it is set.
pub fn init_workers() -> patchgen_core::Result<Option<usize>> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size worker pool: {e}")))?;
    Ok(Some(n))
}

pub fn run_validate(args: &ValidateArgs) -> patchgen_core::Result<SuiteReport> {
    run_suite(
        &build_pool,
        &SuiteConfig {
            seed: args.seed,
            queries_per_mode: args.queries_per_mode,
            overlap_runs: args.overlap_runs,
        },
    )
}
