//! Standard-library companion to `jamlure-core`: configuration files, the
//! delimited output formats, the parallel sweep harness, and the command
//! implementations behind the `jamlure` binary.

pub mod cli;
pub mod config;
pub mod formats;
pub mod sweep;
