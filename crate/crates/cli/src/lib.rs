//! Library side of the `curricula` command-line tool.

pub mod commands;
pub mod config;

pub use config::Config;
