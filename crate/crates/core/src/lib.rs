//! Speaker-adversarial perturbation lab.

pub mod attack;
pub mod checkpoint;
pub mod audio;
pub mod defenses;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod seed;
pub mod ssed;
pub mod training;

pub use error::{Error, Result};
