//! Library side of the `hdpower` command-line tool.

pub mod commands;
pub mod config;
pub mod instances;
pub mod report;
