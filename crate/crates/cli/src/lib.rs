//! Batch runner for layered quantum causal model experiments.

pub mod config;
pub mod render;
pub mod report;
pub mod run;

/// Exit code for a bad config, a bad report or unresolvable references.
pub const EXIT_INVALID: u8 = 2;
/// Exit code when the numerical checks ran and failed.
pub const EXIT_CHECK_FAILED: u8 = 3;
