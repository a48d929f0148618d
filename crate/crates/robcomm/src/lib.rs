//! Scenario files, worker-pool sweeps and the subcommands of the `robcomm` tool,
//! built on [`robcomm_core`].

pub mod commands;
pub mod parallel;
pub mod scenario;

pub use commands::{run_command, Outcome, Overrides};
pub use scenario::{Loaded, Scenario, ScenarioError};
