//! Dense numeric substrate: matrices, named parameter blocks, activations,
//! Adam, and a central finite-difference gradient oracle.
//!
//! All arithmetic is `f64`. Gradients elsewhere in the crate are derived by
//! hand and checked against [`finite_difference_gradient`].

mod activation;
mod adam;
mod gradcheck;
mod matrix;
mod params;

pub use activation::{log_softmax, logit, sigmoid, softmax};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_difference_gradient, relative_error, DEFAULT_FD_STEP};
pub use matrix::DenseMatrix;
pub use params::{BlockSpec, ParameterSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent ChaCha stream `stream` of `seed`. Every random draw in the
/// crate comes from a stream derived this way, so adding or reordering
/// consumers of one stream never shifts another.
pub fn derive_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
