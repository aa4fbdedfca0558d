//! Library surface of the `bpn` tool: config resolution, run directories,
//! the benchmark harness, and the command implementations. The binary in
//! `main.rs` is a thin clap wrapper over these.

pub mod bench;
pub mod commands;
pub mod config;
pub mod runs;

pub use config::TrainFlags;
