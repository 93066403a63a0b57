//! Discriminator and generator objectives.
//!
//! Generator losses use the score-function form: each coefficient is computed
//! from the current players and then held fixed, and the gradient is
//! `-Σ coefficient · ∇ log π`. Differentiating the surrogate
//! `-(f - log π)·log π` through both factors would give a different (wrong)
//! update, so coefficients are never differentiated.

mod metric;

pub use metric::handcrafted_metric;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{decision_boundary, DiscriminatorNet, PolicyNet, PolicyTrace};
use crate::numerics::ParameterSet;
use crate::world::{Context, TokenId};

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` inside logarithms.
pub const CLAMP: f64 = 1e-12;

/// Generator objective family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mle,
    Rl,
    Gan,
    Airl,
    Rairl,
}

impl LossKind {
    pub fn is_adversarial_irl(self) -> bool {
        matches!(self, LossKind::Airl | LossKind::Rairl)
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LossKind::Mle => "mle",
            LossKind::Rl => "rl",
            LossKind::Gan => "gan",
            LossKind::Airl => "airl",
            LossKind::Rairl => "rairl",
        };
        f.write_str(s)
    }
}

/// Loss family plus its switches.
///
/// `constant_term` and `conditional_term` only affect the adversarial IRL
/// kinds; vanilla AIRL is the family with both switched off.
/// `mle_full_form` adds the `-Σ log(1 - π)` penalty over non-target tokens to
/// the MLE loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default = "yes")]
    pub constant_term: bool,
    #[serde(default = "yes")]
    pub conditional_term: bool,
    #[serde(default)]
    pub mle_full_form: bool,
}

fn yes() -> bool {
    true
}

impl LossSpec {
    pub fn of(kind: LossKind) -> Self {
        match kind {
            LossKind::Airl => Self::airl(),
            _ => Self {
                kind,
                constant_term: true,
                conditional_term: true,
                mle_full_form: false,
            },
        }
    }

    pub fn rairl() -> Self {
        Self::of(LossKind::Rairl)
    }

    pub fn airl() -> Self {
        Self {
            kind: LossKind::Airl,
            constant_term: false,
            conditional_term: false,
            mle_full_form: false,
        }
    }

    pub fn with_terms(mut self, constant_term: bool, conditional_term: bool) -> Self {
        self.constant_term = constant_term;
        self.conditional_term = conditional_term;
        self
    }

    /// Offset subtracted from `f - log π`: 0 with the constant term, 1 without.
    pub fn coefficient_offset(&self) -> f64 {
        if self.constant_term {
            0.0
        } else {
            1.0
        }
    }
}

/// A token sequence paired with its context.
#[derive(Debug, Clone, Copy)]
pub struct Episode<'a> {
    pub context: &'a Context,
    pub tokens: &'a [TokenId],
}

impl<'a> Episode<'a> {
    pub fn new(context: &'a Context, tokens: &'a [TokenId]) -> Self {
        Self { context, tokens }
    }
}

/// Discriminator loss with its gradient over (θ, φ).
#[derive(Debug, Clone)]
pub struct DiscriminatorLoss {
    pub loss: f64,
    pub grads: ParameterSet,
    /// Number of `D` values clamped inside a logarithm.
    pub clamped: usize,
    pub d_true: Vec<f64>,
    pub d_generated: Vec<f64>,
}

/// Generator gradient with the per-step coefficients that produced it.
#[derive(Debug, Clone)]
pub struct GeneratorGradientReport {
    pub grads: ParameterSet,
    /// Coefficient of `log π` at each generated step.
    pub coefficients: Vec<f64>,
    /// Coefficient of `log π^true` at each ground-truth step (empty when the
    /// conditional term is off).
    pub true_coefficients: Vec<f64>,
    /// Coefficients were held fixed while differentiating.
    pub detached: bool,
}

fn clamped_ln(p: f64, clamped: &mut usize) -> f64 {
    if p < CLAMP {
        *clamped += 1;
        CLAMP.ln()
    } else {
        p.ln()
    }
}

/// `Σ_t -log D(w_t^true) - log(1 - D(w_t))` with `D = sigmoid(f - log π)`.
///
/// The policy probabilities enter as constants; the gradient runs through
/// `f` only.
pub fn discriminator_loss(
    disc: &DiscriminatorNet,
    policy: &PolicyNet,
    truth: Episode<'_>,
    generated: Episode<'_>,
) -> Result<DiscriminatorLoss> {
    let t = policy.sequence_log_probs(truth.context, truth.tokens)?;
    let g = policy.sequence_log_probs(generated.context, generated.tokens)?;
    discriminator_loss_given(disc, truth, &t, generated, &g)
}

/// [`discriminator_loss`] with the policy log-probabilities supplied.
pub fn discriminator_loss_given(
    disc: &DiscriminatorNet,
    truth: Episode<'_>,
    truth_log_pi: &[f64],
    generated: Episode<'_>,
    generated_log_pi: &[f64],
) -> Result<DiscriminatorLoss> {
    if truth_log_pi.len() != truth.tokens.len() || generated_log_pi.len() != generated.tokens.len() {
        return Err(Error::InvalidInput("one log-probability per token expected".into()));
    }
    let mut grads = disc.params().zeros_like();
    let mut clamped = 0;
    let mut loss = 0.0;

    let t_trace = disc.trace(truth.context, truth.tokens)?;
    let d_true: Vec<f64> = t_trace
        .f
        .iter()
        .zip(truth_log_pi)
        .map(|(&f, &lp)| decision_boundary(f, lp))
        .collect();
    // d/df [-log σ(f - log π)] = σ - 1
    let df: Vec<f64> = d_true.iter().map(|d| d - 1.0).collect();
    loss -= d_true.iter().map(|&d| clamped_ln(d, &mut clamped)).sum::<f64>();
    disc.backward(&t_trace, &df, 0.0, &mut grads);

    let g_trace = disc.trace(generated.context, generated.tokens)?;
    let d_gen: Vec<f64> = g_trace
        .f
        .iter()
        .zip(generated_log_pi)
        .map(|(&f, &lp)| decision_boundary(f, lp))
        .collect();
    // d/df [-log(1 - σ(f - log π))] = σ
    loss -= d_gen.iter().map(|&d| clamped_ln(1.0 - d, &mut clamped)).sum::<f64>();
    disc.backward(&g_trace, &d_gen, 0.0, &mut grads);

    if !loss.is_finite() {
        return Err(Error::Numerical("non-finite discriminator loss".into()));
    }
    Ok(DiscriminatorLoss {
        loss,
        grads,
        clamped,
        d_true,
        d_generated: d_gen,
    })
}

/// Sentence-level binary loss for the GAN baseline:
/// `-log D(true) - log(1 - D(generated))` on the sentence head.
pub fn gan_discriminator_loss(
    disc: &DiscriminatorNet,
    truth: Episode<'_>,
    generated: Episode<'_>,
) -> Result<DiscriminatorLoss> {
    let mut grads = disc.params().zeros_like();
    let mut clamped = 0;
    let t = disc.trace(truth.context, truth.tokens)?;
    let dt = disc.sentence_score(&t);
    let g = disc.trace(generated.context, generated.tokens)?;
    let dg = disc.sentence_score(&g);
    let loss = -clamped_ln(dt, &mut clamped) - clamped_ln(1.0 - dg, &mut clamped);
    disc.backward(&t, &vec![0.0; t.len()], dt - 1.0, &mut grads);
    disc.backward(&g, &vec![0.0; g.len()], dg, &mut grads);
    Ok(DiscriminatorLoss {
        loss,
        grads,
        clamped,
        d_true: vec![dt],
        d_generated: vec![dg],
    })
}

/// `f_t - log π_t - offset` along an episode.
fn adversarial_coefficients(disc: &DiscriminatorNet, ep: Episode<'_>, trace: &PolicyTrace, offset: f64) -> Result<Vec<f64>> {
    if trace.tokens.as_slice() != ep.tokens {
        return Err(Error::InvalidInput("policy trace does not match the episode".into()));
    }
    let d = disc.trace(ep.context, ep.tokens)?;
    Ok(d.f
        .iter()
        .zip(&trace.log_probs)
        .map(|(&f, &lp)| f - lp - offset)
        .collect())
}

/// Vanilla AIRL generator gradient `-Σ_t (f_t - log π_t - 1)·∇ log π_t`.
pub fn airl_generator_gradient(
    disc: &DiscriminatorNet,
    policy: &PolicyNet,
    generated: Episode<'_>,
) -> Result<GeneratorGradientReport> {
    Ok(adversarial_generator_loss(disc, policy, generated, None, LossSpec::airl())?.1)
}

/// Refined generator loss: the constant term makes the generated-token
/// coefficient `f_t - log π_t`, and the conditional term adds the same form
/// over the ground-truth tokens. Returns the surrogate
/// `-Σ c_t log π_t - Σ c_t^true log π_t^true` and its gradient.
pub fn rairl_generator_loss(
    disc: &DiscriminatorNet,
    policy: &PolicyNet,
    generated: Episode<'_>,
    truth: Episode<'_>,
) -> Result<(f64, GeneratorGradientReport)> {
    adversarial_generator_loss(disc, policy, generated, Some(truth), LossSpec::rairl())
}

/// Shared implementation behind the AIRL family; `spec` selects the terms.
pub fn adversarial_generator_loss(
    disc: &DiscriminatorNet,
    policy: &PolicyNet,
    generated: Episode<'_>,
    truth: Option<Episode<'_>>,
    spec: LossSpec,
) -> Result<(f64, GeneratorGradientReport)> {
    let g = policy.trace(generated.context, generated.tokens)?;
    let t = match truth {
        Some(ep) if spec.conditional_term => Some((ep, policy.trace(ep.context, ep.tokens)?)),
        _ => None,
    };
    adversarial_generator_loss_traced(disc, policy, generated, &g, t.as_ref().map(|(e, tr)| (*e, tr)), spec)
}

/// [`adversarial_generator_loss`] with policy traces supplied.
pub fn adversarial_generator_loss_traced(
    disc: &DiscriminatorNet,
    policy: &PolicyNet,
    generated: Episode<'_>,
    generated_trace: &PolicyTrace,
    truth: Option<(Episode<'_>, &PolicyTrace)>,
    spec: LossSpec,
) -> Result<(f64, GeneratorGradientReport)> {
    let offset = spec.coefficient_offset();
    let mut grads = policy.params().zeros_like();
    let coefficients = adversarial_coefficients(disc, generated, generated_trace, offset)?;
    let mut loss = -coefficients
        .iter()
        .zip(&generated_trace.log_probs)
        .map(|(c, lp)| c * lp)
        .sum::<f64>();
    let neg: Vec<f64> = coefficients.iter().map(|c| -c).collect();
    policy.backward_log_probs(generated_trace, &neg, &mut grads);

    let mut true_coefficients = Vec::new();
    if spec.conditional_term {
        if let Some((truth, ttrace)) = truth {
            let tc = adversarial_coefficients(disc, truth, ttrace, offset)?;
            loss -= tc.iter().zip(&ttrace.log_probs).map(|(c, lp)| c * lp).sum::<f64>();
            let neg: Vec<f64> = tc.iter().map(|c| -c).collect();
            policy.backward_log_probs(ttrace, &neg, &mut grads);
            true_coefficients = tc;
        }
    }
    Ok((
        loss,
        GeneratorGradientReport {
            grads,
            coefficients,
            true_coefficients,
            detached: true,
        },
    ))
}

/// Loss and gradient for the policy alone.
#[derive(Debug, Clone)]
pub struct PolicyLoss {
    pub loss: f64,
    pub grads: ParameterSet,
    pub clamped: usize,
}

/// `-Σ log π_t^true`, plus `-Σ_t Σ_{v ≠ w_t} log(1 - π_t(v))` when `full_form`.
pub fn mle_loss(policy: &PolicyNet, truth: Episode<'_>, full_form: bool) -> Result<PolicyLoss> {
    mle_loss_traced(policy, &policy.trace(truth.context, truth.tokens)?, full_form)
}

/// [`mle_loss`] on a precomputed trace of the ground-truth sequence.
pub fn mle_loss_traced(policy: &PolicyNet, trace: &PolicyTrace, full_form: bool) -> Result<PolicyLoss> {
    let mut clamped = 0;
    let mut loss = -trace.log_probs.iter().sum::<f64>();
    let mut d_logits = Vec::with_capacity(trace.tokens.len());
    for (k, &w) in trace.tokens.iter().enumerate() {
        let pi = &trace.probs[k];
        // d(-log π_w)/dz = π - e_w
        let mut d: Vec<f64> = pi.clone();
        d[w] -= 1.0;
        if full_form {
            let mut weight_sum = 0.0;
            for (v, &p) in pi.iter().enumerate() {
                if v == w {
                    continue;
                }
                let rest = 1.0 - p;
                let rest = if rest < CLAMP {
                    clamped += 1;
                    CLAMP
                } else {
                    rest
                };
                loss -= rest.ln();
                weight_sum += p / rest;
                d[v] += p / rest;
            }
            for (j, dj) in d.iter_mut().enumerate() {
                *dj -= pi[j] * weight_sum;
            }
        }
        d_logits.push(d);
    }
    let mut grads = policy.params().zeros_like();
    policy.backward_logits(trace, &d_logits, &mut grads);
    Ok(PolicyLoss { loss, grads, clamped })
}

/// `-r·Σ log π_t` with the sequence reward `r` held fixed.
pub fn rl_loss(policy: &PolicyNet, generated: Episode<'_>, reward: f64) -> Result<PolicyLoss> {
    weighted_log_likelihood(policy, &policy.trace(generated.context, generated.tokens)?, reward)
}

/// `-D_gen·Σ log π_t` with the sentence-level score `D_gen` held fixed.
pub fn gan_sentence_loss(
    disc: &DiscriminatorNet,
    policy: &PolicyNet,
    generated: Episode<'_>,
) -> Result<(PolicyLoss, f64)> {
    gan_sentence_loss_traced(disc, policy, generated, &policy.trace(generated.context, generated.tokens)?)
}

/// [`gan_sentence_loss`] on a precomputed policy trace.
pub fn gan_sentence_loss_traced(
    disc: &DiscriminatorNet,
    policy: &PolicyNet,
    generated: Episode<'_>,
    trace: &PolicyTrace,
) -> Result<(PolicyLoss, f64)> {
    let t = disc.trace(generated.context, generated.tokens)?;
    let d_gen = disc.sentence_score(&t);
    Ok((weighted_log_likelihood(policy, trace, d_gen)?, d_gen))
}

/// `-w·Σ log π_t` for a fixed weight `w`, on a precomputed trace.
pub fn weighted_log_likelihood(policy: &PolicyNet, trace: &PolicyTrace, weight: f64) -> Result<PolicyLoss> {
    let loss = -weight * trace.log_probs.iter().sum::<f64>();
    let mut grads = policy.params().zeros_like();
    if weight != 0.0 {
        policy.backward_log_probs(trace, &vec![-weight; trace.tokens.len()], &mut grads);
    }
    Ok(PolicyLoss {
        loss,
        grads,
        clamped: 0,
    })
}
