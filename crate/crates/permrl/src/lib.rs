//! Synthesis of permutation circuits (sequences of SWAP gates) on connected
//! subgraphs of a square lattice.
//!
//! A single policy network is trained on randomly sampled sub-topologies of a
//! base lattice, with invalid swaps excluded by action masking, so that one
//! model can synthesize circuits for any connected coupling map that embeds in
//! the lattice. The crate also ships the classical comparators used to judge
//! it: a randomized approximate token-swapping heuristic and an exact
//! breadth-first oracle for small instances, plus a benchmark harness that
//! turns the three into ratio statistics.
//!
//! Module map:
//! - [`lattice`]: base lattice, topology masks, presets, sampling, distances.
//! - [`env`]: permutation state, swap dynamics, rewards, curriculum.
//! - [`policy`]: observation encoding, the feedforward policy/value net,
//!   masked action distributions, model persistence.
//! - [`trainer`]: PPO with action masking and curriculum; fine-tuning.
//! - [`synth`]: inference-time circuit synthesis and verification.
//! - [`baselines`]: token swapper and BFS-exact oracle.
//! - [`bench`]: comparison suites, ratio summaries, data export.

pub mod baselines;
pub mod bench;
pub mod env;
mod error;
pub mod lattice;
pub mod policy;
pub mod rng;
pub mod synth;
pub mod trainer;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Version string for file formats that embed one.
pub const FORMAT_VERSION: u32 = 1;
