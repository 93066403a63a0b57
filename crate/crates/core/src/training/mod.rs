//! The alternating training loop, its run record, exact KL evaluation and
//! checkpoints.
//!
//! Each iteration samples a batch of (context, ground truth) pairs from the
//! world and one policy sample per pair, takes one Adam step on the
//! discriminator and then one on the policy. Generator coefficients are
//! computed with the freshly updated discriminator.

mod checkpoint;
mod config;
mod kl;
mod record;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::TrainingConfig;
pub use kl::{exact_policy_kl, policy_kl_by_context};
pub use record::{EvalPoint, RunRecord, RUN_CSV_LEADING, RUN_CSV_TRAILING};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::diversity_metrics;
use crate::losses::{
    adversarial_generator_loss_traced, discriminator_loss_given, gan_discriminator_loss, gan_sentence_loss_traced,
    handcrafted_metric, mle_loss_traced, weighted_log_likelihood, Episode, LossKind,
};
use crate::models::{decision_boundary, DiscriminatorNet, PolicyNet, PolicyTrace};
use crate::numerics::{derive_rng, AdamState, ParameterSet};
use crate::world::{GrammarWorld, TokenId};

const INIT_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const PROBE_STREAM: u64 = 1 << 32;

/// Running loss sums between evaluation points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossWindow {
    pub disc_sum: f64,
    pub gen_sum: f64,
    pub iterations: usize,
    pub clamped: usize,
}

/// One training pair with the policy's sample for the same context.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub context: usize,
    pub truth: Vec<TokenId>,
    pub generated: Vec<TokenId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub iteration: usize,
    pub disc_loss: f64,
    pub gen_loss: f64,
    pub gen_grad_norm: f64,
    pub clamped: usize,
}

/// Mutable state of one run. The world is borrowed; everything else is owned.
#[derive(Debug, Clone)]
pub struct Trainer<'w> {
    world: &'w GrammarWorld,
    config: TrainingConfig,
    policy: PolicyNet,
    disc: DiscriminatorNet,
    gen_adam: AdamState,
    disc_adam: AdamState,
    rng: ChaCha8Rng,
    iteration: usize,
    record: RunRecord,
    window: LossWindow,
}

impl<'w> Trainer<'w> {
    /// Fresh players initialized from the config seed; records the initial
    /// evaluation point.
    pub fn new(config: TrainingConfig, world: &'w GrammarWorld) -> Result<Self> {
        config.validate()?;
        let dims = config.dims(world);
        let mut init = derive_rng(config.seed, INIT_STREAM);
        let policy = PolicyNet::new(dims, &mut init);
        let disc = DiscriminatorNet::new(dims, config.gamma, &mut init)?;
        Self::with_players(config, world, policy, disc)
    }

    /// Starts from the given players instead of a random initialization.
    pub fn with_players(
        config: TrainingConfig,
        world: &'w GrammarWorld,
        policy: PolicyNet,
        disc: DiscriminatorNet,
    ) -> Result<Self> {
        config.validate()?;
        let dims = config.dims(world);
        if policy.dims() != dims || disc.dims() != dims {
            return Err(Error::Config("model dimensions do not match the world and config".into()));
        }
        let gen_adam = AdamState::new(config.generator_optimizer(), policy.params())?;
        let disc_adam = AdamState::new(config.discriminator_optimizer(), disc.params())?;
        let names = world.contexts().iter().map(|c| c.name.clone()).collect();
        let mut t = Self {
            world,
            rng: derive_rng(config.seed, TRAIN_STREAM),
            config,
            policy,
            disc,
            gen_adam,
            disc_adam,
            iteration: 0,
            record: RunRecord::new(names),
            window: LossWindow::default(),
        };
        let p = t.evaluate()?;
        t.record.push(p)?;
        Ok(t)
    }

    pub fn from_checkpoint(ckpt: Checkpoint, world: &'w GrammarWorld) -> Result<Self> {
        ckpt.config.validate()?;
        if ckpt.config.dims(world) != ckpt.dims {
            return Err(Error::Config("checkpoint does not match the world".into()));
        }
        Ok(Self {
            world,
            policy: PolicyNet::from_params(ckpt.dims, ckpt.policy)?,
            disc: DiscriminatorNet::from_params(ckpt.dims, ckpt.config.gamma, ckpt.discriminator)?,
            config: ckpt.config,
            gen_adam: ckpt.generator_adam,
            disc_adam: ckpt.discriminator_adam,
            rng: ckpt.rng,
            iteration: ckpt.iteration,
            record: ckpt.record,
            window: ckpt.window,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            dims: self.policy.dims(),
            iteration: self.iteration,
            policy: self.policy.params().clone(),
            discriminator: self.disc.params().clone(),
            generator_adam: self.gen_adam.clone(),
            discriminator_adam: self.disc_adam.clone(),
            rng: self.rng.clone(),
            record: self.record.clone(),
            window: self.window.clone(),
        }
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn world(&self) -> &'w GrammarWorld {
        self.world
    }

    pub fn policy(&self) -> &PolicyNet {
        &self.policy
    }

    pub fn discriminator(&self) -> &DiscriminatorNet {
        &self.disc
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    pub fn into_parts(self) -> (RunRecord, PolicyNet, DiscriminatorNet) {
        (self.record, self.policy, self.disc)
    }

    pub fn sample_batch(&mut self) -> Result<Vec<BatchItem>> {
        let mut batch = Vec::with_capacity(self.config.batch_size);
        for _ in 0..self.config.batch_size {
            let (ctx, truth) = self.world.sample_pair(&mut self.rng);
            let rollout = self.policy.sample_sequence(ctx, &mut self.rng, self.world.max_len())?;
            batch.push(BatchItem {
                context: ctx.id,
                truth: truth.tokens,
                generated: rollout.sample.tokens,
            });
        }
        Ok(batch)
    }

    fn episodes<'a>(&'a self, item: &'a BatchItem) -> Result<(Episode<'a>, Episode<'a>)> {
        let ctx = self.world.context(item.context)?;
        Ok((Episode::new(ctx, &item.truth), Episode::new(ctx, &item.generated)))
    }

    /// Policy traces of the ground truth and the sample for every batch item.
    pub fn policy_traces(&self, batch: &[BatchItem]) -> Result<Vec<(PolicyTrace, PolicyTrace)>> {
        batch
            .iter()
            .map(|item| {
                let (truth, generated) = self.episodes(item)?;
                Ok((
                    self.policy.trace(truth.context, truth.tokens)?,
                    self.policy.trace(generated.context, generated.tokens)?,
                ))
            })
            .collect()
    }

    /// One Adam step on the discriminator; returns the mean loss and clamp count.
    pub fn discriminator_update(&mut self, batch: &[BatchItem]) -> Result<(f64, usize)> {
        let traces = self.policy_traces(batch)?;
        self.discriminator_update_traced(batch, &traces)
    }

    fn discriminator_update_traced(
        &mut self,
        batch: &[BatchItem],
        traces: &[(PolicyTrace, PolicyTrace)],
    ) -> Result<(f64, usize)> {
        let mut grads = self.disc.params().zeros_like();
        let mut loss = 0.0;
        let mut clamped = 0;
        for (item, (tt, gt)) in batch.iter().zip(traces) {
            let (truth, generated) = self.episodes(item)?;
            let out = if self.config.loss.kind == LossKind::Gan {
                gan_discriminator_loss(&self.disc, truth, generated)?
            } else {
                discriminator_loss_given(&self.disc, truth, &tt.log_probs, generated, &gt.log_probs)?
            };
            loss += out.loss;
            clamped += out.clamped;
            grads.add_scaled(1.0, &out.grads);
        }
        let n = batch.len() as f64;
        grads.scale(1.0 / n);
        self.disc_adam.apply(self.disc.params_mut(), &grads)?;
        Ok((loss / n, clamped))
    }

    /// Mean generator loss and gradient over the batch under the configured
    /// loss, with the current discriminator.
    pub fn generator_gradient(&self, batch: &[BatchItem]) -> Result<(f64, ParameterSet, usize)> {
        self.generator_gradient_traced(batch, &self.policy_traces(batch)?)
    }

    fn generator_gradient_traced(
        &self,
        batch: &[BatchItem],
        traces: &[(PolicyTrace, PolicyTrace)],
    ) -> Result<(f64, ParameterSet, usize)> {
        let spec = self.config.loss;
        let mut grads = self.policy.params().zeros_like();
        let mut loss = 0.0;
        let mut clamped = 0;
        for (item, (tt, gt)) in batch.iter().zip(traces) {
            let (truth, generated) = self.episodes(item)?;
            let (l, g) = match spec.kind {
                LossKind::Mle => {
                    let out = mle_loss_traced(&self.policy, tt, spec.mle_full_form)?;
                    clamped += out.clamped;
                    (out.loss, out.grads)
                }
                LossKind::Rl => {
                    let r = handcrafted_metric(&item.generated, &item.truth);
                    let out = weighted_log_likelihood(&self.policy, gt, r)?;
                    (out.loss, out.grads)
                }
                LossKind::Gan => {
                    let (out, _) = gan_sentence_loss_traced(&self.disc, &self.policy, generated, gt)?;
                    (out.loss, out.grads)
                }
                LossKind::Airl | LossKind::Rairl => {
                    let (l, report) =
                        adversarial_generator_loss_traced(&self.disc, &self.policy, generated, gt, Some((truth, tt)), spec)?;
                    (l, report.grads)
                }
            };
            loss += l;
            grads.add_scaled(1.0, &g);
        }
        let n = batch.len() as f64;
        grads.scale(1.0 / n);
        Ok((loss / n, grads, clamped))
    }

    /// One Adam step on the policy; returns the mean loss, gradient norm and
    /// clamp count.
    pub fn generator_update(&mut self, batch: &[BatchItem]) -> Result<(f64, f64, usize)> {
        let (loss, grads, clamped) = self.generator_gradient(batch)?;
        let norm = grads.norm();
        self.gen_adam.apply(self.policy.params_mut(), &grads)?;
        Ok((loss, norm, clamped))
    }

    /// One iteration of the alternating loop.
    pub fn step(&mut self) -> Result<StepReport> {
        let at = self.iteration + 1;
        let wrap = |e: Error| match e {
            Error::Numerical(m) => Error::Numerical(format!("iteration {at}: {m}")),
            other => other,
        };
        let batch = self.sample_batch().map_err(wrap)?;
        // The policy is unchanged until its own update, so one set of traces
        // serves both players.
        let traces = self.policy_traces(&batch).map_err(wrap)?;
        let (disc_loss, c1) = self.discriminator_update_traced(&batch, &traces).map_err(wrap)?;
        let (gen_loss, grads, c2) = self.generator_gradient_traced(&batch, &traces).map_err(wrap)?;
        let gen_grad_norm = grads.norm();
        self.gen_adam.apply(self.policy.params_mut(), &grads).map_err(wrap)?;
        if !disc_loss.is_finite() || !gen_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "iteration {at}: non-finite loss (discriminator {disc_loss}, generator {gen_loss})"
            )));
        }
        self.iteration = at;
        self.window.disc_sum += disc_loss;
        self.window.gen_sum += gen_loss;
        self.window.iterations += 1;
        self.window.clamped += c1 + c2;
        Ok(StepReport {
            iteration: at,
            disc_loss,
            gen_loss,
            gen_grad_norm,
            clamped: c1 + c2,
        })
    }

    /// Probe statistics of the current players. Uses its own RNG stream, so
    /// evaluating never perturbs training.
    pub fn evaluate(&self) -> Result<EvalPoint> {
        let mut rng = derive_rng(self.config.seed, PROBE_STREAM + self.iteration as u64);
        let n_ctx = self.world.contexts().len();
        let mut d_gen = Vec::new();
        let mut d_true = Vec::new();
        let mut generated = Vec::with_capacity(self.config.probe_batch);
        let mut truths = Vec::with_capacity(self.config.probe_batch);
        for i in 0..self.config.probe_batch {
            let ctx = &self.world.contexts()[i % n_ctx];
            let truth = self.world.sample_sentence(ctx.id, &mut rng).tokens;
            let rollout = self.policy.sample_sequence(ctx, &mut rng, self.world.max_len())?;
            let f = self.disc.trace(ctx, &rollout.sample.tokens)?.f;
            d_gen.extend(f.iter().zip(&rollout.log_probs).map(|(&f, &lp)| decision_boundary(f, lp)));
            let f = self.disc.trace(ctx, &truth)?.f;
            let lp = self.policy.sequence_log_probs(ctx, &truth)?;
            d_true.extend(f.iter().zip(&lp).map(|(&f, &lp)| decision_boundary(f, lp)));
            generated.push(rollout.sample.tokens);
            truths.push(truth);
        }
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let mean_d = mean(&d_gen);
        let std_d = (d_gen.iter().map(|d| (d - mean_d).powi(2)).sum::<f64>() / d_gen.len() as f64).sqrt();
        let mean_abs_dev = d_gen.iter().map(|d| (d - 0.5).abs()).sum::<f64>() / d_gen.len() as f64;
        let kl = policy_kl_by_context(self.world, &self.policy, self.config.kl_cap)?;
        let kl_mean = mean(&kl);
        let div = diversity_metrics(&generated, &truths, &truths)?;
        let w = &self.window;
        let per = |s: f64| if w.iterations == 0 { 0.0 } else { s / w.iterations as f64 };
        let point = EvalPoint {
            iteration: self.iteration,
            mean_d,
            std_d,
            mean_abs_dev,
            mean_d_true: mean(&d_true),
            disc_loss: per(w.disc_sum),
            gen_loss: per(w.gen_sum),
            clamped: w.clamped,
            kl,
            kl_mean,
            distinct: div.distinct,
            coverage: div.coverage,
            novel_ratio: div.novel_ratio,
        };
        let finite = [point.mean_d, point.std_d, point.mean_d_true, point.disc_loss, point.gen_loss, kl_mean]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numerical(format!("iteration {}: non-finite evaluation", self.iteration)));
        }
        Ok(point)
    }

    /// Trains up to iteration `until`, evaluating every `eval_every`
    /// iterations and at the configured final iteration. Stopping between
    /// evaluation points adds none, so a paused run resumes exactly.
    /// `hook` sees every new evaluation point.
    pub fn run_until(&mut self, until: usize, mut hook: impl FnMut(&EvalPoint)) -> Result<()> {
        while self.iteration < until {
            self.step()?;
            if self.iteration.is_multiple_of(self.config.eval_every) || self.iteration == self.config.iterations {
                let point = self.evaluate()?;
                hook(&point);
                self.record.push(point)?;
                self.window = LossWindow::default();
            }
        }
        Ok(())
    }

    /// Trains for the configured number of iterations.
    pub fn run(&mut self) -> Result<()> {
        let n = self.config.iterations;
        self.run_until(n, |p| {
            log::info!(
                "iter {:>6}  D {:.3}±{:.3}  |D-0.5| {:.3}  KL {:.4}  Ld {:.3}  Lg {:.3}",
                p.iteration,
                p.mean_d,
                p.std_d,
                p.mean_abs_dev,
                p.kl_mean,
                p.disc_loss,
                p.gen_loss
            )
        })
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub record: RunRecord,
    pub policy: PolicyNet,
    pub discriminator: DiscriminatorNet,
    pub checkpoint: Checkpoint,
}

/// Runs the configured training from scratch.
pub fn train(config: TrainingConfig, world: &GrammarWorld) -> Result<TrainedRun> {
    let mut t = Trainer::new(config, world)?;
    t.run()?;
    let checkpoint = t.checkpoint();
    let (record, policy, discriminator) = t.into_parts();
    Ok(TrainedRun {
        record,
        policy,
        discriminator,
        checkpoint,
    })
}

#[cfg(test)]
mod tests;
