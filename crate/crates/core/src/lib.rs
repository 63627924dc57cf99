//! Coverage-guided fuzzing with coverage-weighted rewards for an infilling
//! mutator.

pub mod commands;
pub mod config;
pub mod coverage;
pub mod error;
pub mod executor;
pub mod fuzzer;
pub mod mutation;
pub mod protocol;
pub mod reward;

pub use error::{CovrlError, Result};
