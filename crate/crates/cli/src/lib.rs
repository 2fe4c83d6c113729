//! Command-line front end, configuration files, checkpoints and CSV output
//! for `nnde-core`.

pub mod checkpoint;
pub mod checks;
pub mod commands;
pub mod config;
pub mod csvout;
pub mod hexfloat;

pub use commands::{main_with, Cli, Command, ExitCode};
