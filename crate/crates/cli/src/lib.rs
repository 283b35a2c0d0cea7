//! Library surface of the command-line runner, exposed so integration
//! tests can drive configuration parsing and output handling directly.

pub mod config;
pub mod output;
pub mod runner;
