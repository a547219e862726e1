//! Command implementations behind the `bodyfuse` binary.

pub mod config;
pub mod error;
pub mod eval;
pub mod tools;
pub mod train;

pub use config::{RunConfig, Task};
pub use error::{CliError, Result};
