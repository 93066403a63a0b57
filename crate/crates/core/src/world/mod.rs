//! Synthetic grammar worlds with an exactly known sentence distribution,
//! synonym-structured vocabulary and a ground-truth per-token reward.

mod file;
mod generate;
mod grammar;
mod vocab;

pub use file::{ClassDef, ContextDef, RewardDef, TemplateDef, WorldFile, WORLD_FORMAT_VERSION};
pub use generate::default_world;
pub use grammar::{Context, GrammarWorld, SampleSource, SequenceSample, Slot, Template};
pub use vocab::{SynonymClass, TokenId, Vocabulary, BOS, EOS};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seed of the shipped default world.
pub const DEFAULT_WORLD_SEED: u64 = 7;

impl GrammarWorld {
    /// [`default_world`] built from a seed.
    pub fn default_with_seed(seed: u64) -> crate::Result<Self> {
        default_world(&mut ChaCha8Rng::seed_from_u64(seed))
    }
}

#[cfg(test)]
mod tests;
