//! Command-line driver for offline evaluation, reporting, live serving,
//! replay and synthetic corpus generation.

pub mod cli;
pub mod config;
pub mod harness;
