//! Scenario runner for the hopper simulator: config parsing, scenario wiring,
//! CSV and report output, and the acceptance suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod error;
pub mod output;
pub mod report;
pub mod scenario;

pub use config::Config;
pub use error::RunError;
pub use scenario::{run_scenario, Outcome};
