//! Benchmark fixtures shared by the criterion targets.

pub use ifedit_core::harness::{synthetic_suite, Scene};

/// The first scene of the default 64x64 synthetic suite.
pub fn default_scene() -> Scene {
    synthetic_suite(1, 64, 0).remove(0)
}
