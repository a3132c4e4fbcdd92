//! Command-line tool and HTTP service around the `userside` library.

pub mod cli;
pub mod engine;
pub mod load;
pub mod service;

pub use cli::{exit_code, run, Cli};
