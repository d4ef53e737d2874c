//! Lifelong relation detection: episodic memory replay, embedding alignment
//! and constrained-gradient baselines over a stream of relation tasks.

pub mod bench;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gproject;
pub mod memory;
pub mod model;
pub mod numgrad;
pub mod oracle;
pub mod rng;
pub mod selftest;
pub mod strategies;

pub use error::{Error, Result};
