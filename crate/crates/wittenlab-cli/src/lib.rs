//! Scenario runner and command-line front end for `wittenlab`.

pub mod cli;
pub mod config;
pub mod error;
pub mod run;

pub use cli::{main_with_args, Cli};
pub use config::{parse_config, FieldSource, PrefactorSelect, Scenario};
pub use error::{exit, CliError};
pub use run::{execute, Check, RunOutput, RunReport};
