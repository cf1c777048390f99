//! Configuration parsing, subcommand runners and CSV output for the
//! `cone-green` binary.

pub mod commands;
pub mod config;
pub mod output;
