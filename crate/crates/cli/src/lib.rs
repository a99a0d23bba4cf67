//! Experiment driver for the `radalloc` library: benches, artifacts and the
//! command-line surface.

pub mod bench;
pub mod cli;
pub mod config;
pub mod output;
pub mod plots;
pub mod stats;

pub use config::BenchConfig;
