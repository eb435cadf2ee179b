//! The `conecalc` command-line front end: configuration, dispatch and report
//! writing. The binary in `main.rs` is a thin clap wrapper around [`commands::run`].

pub mod commands;
pub mod config;
pub mod report;
pub mod verify;
