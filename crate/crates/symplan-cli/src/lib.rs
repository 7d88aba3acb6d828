//! Library surface of the `symplan` CLI: configuration, stage orchestration,
//! and the benchmark harness. The binary in `main.rs` is a thin argument
//! parser over these functions, so integration tests drive the same code the
//! command line does.

pub mod bench;
pub mod config;
pub mod pipeline;
