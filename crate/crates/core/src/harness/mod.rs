//! Experiment orchestration.

/// CLI entry point; returns a process exit code.
pub fn cli(_argv: Vec<String>) -> i32 {
    0
}
