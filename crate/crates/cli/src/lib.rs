//! Configuration, orchestration and output writing behind the `shapeopt`
//! command-line tool.

pub mod config;
pub mod experiment;
pub mod gen_mesh;
pub mod verify;

pub use config::{ConfigError, ExperimentConfig};
pub use experiment::{compare, run, RunError, Termination};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_CONVERGED: i32 = 0;
/// Solver, I/O or other runtime failure; also a failed `verify` check.
pub const EXIT_FAILURE: i32 = 1;
/// Command-line usage error (reported by the argument parser).
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_MESH_INVALID: i32 = 4;
pub const EXIT_ITERATION_CAP: i32 = 5;
pub const EXIT_STAGNATED: i32 = 6;
