//! Configuration-driven experiment runner for superlab.
//!
//! A run reads one JSON spec, executes the matching pipeline, writes CSV and
//! JSON artifacts plus `manifest.json`, and exits 0 when every declared
//! tolerance holds, 1 on a tolerance violation, 2 on a schema error and 3 on
//! a runtime failure.

pub mod artifacts;
pub mod bundle;
pub mod error;
pub mod experiments;
pub mod spec;

pub use error::{exit, CliError, CliResult};
pub use experiments::{run, Outcome, OUTPUT_DIR_ENV};
pub use spec::{ExperimentSpec, Kind};
