use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::models::ModelDims;
use crate::numerics::AdamConfig;
use crate::world::{GrammarWorld, DEFAULT_WORLD_SEED};

/// Everything that determines a training run.
///
/// Both players default to Adam with learning rate 1e-3: at 16/32-dimensional
/// desk scale the 1e-5 rate used for large captioning models barely moves the
/// parameters within 20k iterations. Set the rates to 1e-5 to use it anyway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub loss: LossSpec,
    /// Number of iterations N; each is one discriminator and one generator step.
    pub iterations: usize,
    /// Ground-truth/generated sequence pairs per iteration.
    pub batch_size: usize,
    pub generator_lr: f64,
    pub discriminator_lr: f64,
    /// Discount of the shaping term, in (0, 1].
    pub gamma: f64,
    pub seed: u64,
    /// Evaluate every this many iterations (and at 0 and N).
    pub eval_every: usize,
    /// World definition; the built-in world is used when absent.
    pub world_file: Option<PathBuf>,
    /// Seed for the built-in world's embeddings and context features.
    pub world_seed: u64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Sequences sampled per evaluation point.
    pub probe_batch: usize,
    /// Maximum number of sentences enumerated per context for exact KL.
    pub kl_cap: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            loss: LossSpec::rairl(),
            iterations: 20_000,
            batch_size: 16,
            generator_lr: 1e-3,
            discriminator_lr: 1e-3,
            gamma: 1.0,
            seed: 0,
            eval_every: 500,
            world_file: None,
            world_seed: DEFAULT_WORLD_SEED,
            embed_dim: 16,
            hidden_dim: 32,
            probe_batch: 96,
            kl_cap: 100_000,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.generator_lr > 0.0 && self.generator_lr.is_finite()) {
            return bad("generator_lr must be positive");
        }
        if !(self.discriminator_lr > 0.0 && self.discriminator_lr.is_finite()) {
            return bad("discriminator_lr must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("model dimensions must be positive");
        }
        if self.probe_batch == 0 {
            return bad("probe_batch must be at least 1");
        }
        Ok(())
    }

    /// Loads the configured world file, or builds the default world.
    pub fn load_world(&self) -> Result<GrammarWorld> {
        match &self.world_file {
            Some(path) => {
                if !path.exists() {
                    return Err(Error::Config(format!("world file not found: {}", path.display())));
                }
                GrammarWorld::load(path)
            }
            None => GrammarWorld::default_with_seed(self.world_seed),
        }
    }

    pub fn dims(&self, world: &GrammarWorld) -> ModelDims {
        ModelDims {
            vocab_size: world.vocab().len(),
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            context_dim: world.context_dim(),
        }
    }

    pub fn generator_optimizer(&self) -> AdamConfig {
        AdamConfig::with_learning_rate(self.generator_lr)
    }

    pub fn discriminator_optimizer(&self) -> AdamConfig {
        AdamConfig::with_learning_rate(self.discriminator_lr)
    }
}
