//! Library side of the `phasesync` command-line tool.
//!
//! - `analyze <input.csv> [--train 25,50,200] [--test 1000] [--no-refine] [--out report.json]`
//! - `generate <spec.cfg> --out trace.csv`
//! - `simulate <session.cfg> --seeds 100 --out reports/`
//!
//! Exit codes: 0 success, 1 usage error, 2 input parse or config error,
//! 3 runtime failure (including per-device fit failures and failed sessions,
//! after the partial report has been written).

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod report;

pub use error::CliError;
