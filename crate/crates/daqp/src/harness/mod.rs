//! Test and benchmark harness: seeded problem generation, a plain-text
//! problem/solution file format, and timing drivers.
//!
//! Everything here is deterministic given a seed, so benchmark tables and
//! regression corpora can be reproduced exactly.

pub mod bench;
pub mod fileio;
pub mod generator;

pub use bench::{run_benchmark, run_sequence, BenchConfig, BenchRecord, SequenceConfig, SequenceReport};
pub use fileio::{read_problem, read_solution, write_problem, write_solution, FileError, SolutionFile};
pub use generator::{generate, GeneratorConfig};
