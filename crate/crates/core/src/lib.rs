//! Maxway and model-X conditional randomization tests.

pub mod conditioners;
pub mod data;
pub mod engines;
pub mod error;
pub mod harness;
pub mod learners;
pub mod rng;
pub mod simgen;
pub mod statistics;

pub use error::{Flag, MaxwayError, Result};
pub use rng::RngHandle;
