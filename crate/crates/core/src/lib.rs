//! Refined adversarial inverse reinforcement learning (rAIRL) for discrete
//! sequence generation on synthetic grammar worlds with known ground truth.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: dense matrices, parameter sets, Adam, finite differences
//! - [`world`]: grammar worlds with exact sentence probabilities
//! - [`models`]: recurrent policy and the shaped-reward discriminator
//! - [`losses`]: discriminator, generator and baseline objectives
//! - [`training`]: the alternating training loop, run records, checkpoints
//! - [`evaluation`]: compactness, diversity, diagnosis, dynamics, top-k
//! - [`cli`]: experiment configs and the `rairl` command surface

// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod models;
pub mod numerics;
pub mod training;
pub mod world;

pub use error::{Error, Result};
