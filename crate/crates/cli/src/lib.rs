//! Configuration, command dispatch and report files for the `lbe` tool.

pub mod config;
pub mod report;
pub mod run;

pub use config::{parse_config, ConfigError, RunConfig};
pub use report::{emit_report, Report, Table};
pub use run::{run_command, Command, RunError};

/// Environment variable overriding the output directory of the config.
pub const OUTPUT_ENV: &str = "LBE_OUT";

/// Exit status when every verdict passes.
pub const EXIT_PASS: i32 = 0;
/// Exit status for configuration, numerical or I/O errors.
pub const EXIT_ERROR: i32 = 1;
/// Exit status when a verdict fails or a solve does not converge.
pub const EXIT_FAIL: i32 = 2;
