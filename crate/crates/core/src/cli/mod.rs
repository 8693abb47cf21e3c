//! Scenario ingestion, orchestration and result files behind the `dsaawet`
//! binary.

pub mod commands;
pub mod output;
pub mod scenario;

pub use commands::{cmd_compare, cmd_run, cmd_sweep, cmd_validate, execute, parse_seeds, CommandOptions};
pub use scenario::{parse_scenario, parse_scenario_str, Scenario};
