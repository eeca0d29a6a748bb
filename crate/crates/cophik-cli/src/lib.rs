//! Library side of the command-line front end: file formats and
//! subcommand implementations, reused by the binary and its tests.

pub mod commands;
pub mod formats;
