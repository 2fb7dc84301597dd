//! File formats, experiment commands and the `kinvi` command line on top of
//! [`kinvi_core`].
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 when
//! a fit diverges (the last good state is still checkpointed).

pub mod commands;
pub mod error;
pub mod formats;

pub use error::{CliError, Result};
