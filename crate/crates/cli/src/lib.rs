//! Pipeline driver behind the `agrotrend` command: run configuration, stage
//! orchestration, report writing and the run manifest.

pub mod config;
pub mod draws;
pub mod fixture;
pub mod manifest;
pub mod pipeline;

use agrotrend_core::ErrorKind;

pub use config::RunConfig;
pub use pipeline::{run_pipeline, Figure, Pipeline};

/// A numerical failure raised by the driver itself rather than the core.
#[derive(Debug, thiserror::Error)]
#[error("numerical failure: {0}")]
pub struct NumericalFailure(pub String);

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Exit status for an error: the first categorised cause in the chain wins.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<agrotrend_core::Error>() {
            return match e.kind() {
                ErrorKind::Validation => EXIT_VALIDATION,
                ErrorKind::Numerical => EXIT_NUMERICAL,
                ErrorKind::Io => EXIT_IO,
            };
        }
        if cause.is::<NumericalFailure>() {
            return EXIT_NUMERICAL;
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_VALIDATION
}
