use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::losses::handcrafted_metric;
use crate::models::{DiscriminatorNet, PolicyNet};
use crate::numerics::derive_rng;
use crate::world::{Context, TokenId};

/// Per-token signal the drop rule is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropSignal {
    /// `exp(f)`, the estimated density; always positive.
    #[default]
    Density,
    /// Shaped reward `f`.
    F,
    /// Word reward `g`.
    G,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosisOptions {
    /// Relative drop above which a position is flagged.
    pub threshold: f64,
    pub signal: DropSignal,
    /// Scale for raw drops where the previous value is near zero; defaults to
    /// the sentence's mean absolute signal.
    pub scale: Option<f64>,
}

impl Default for DiagnosisOptions {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            signal: DropSignal::Density,
            scale: None,
        }
    }
}

/// Values of `|r|` at or below this use the raw-difference rule.
pub const NEAR_ZERO: f64 = 1e-6;

/// Drop rate at every position (0 at position 0) and the first position
/// `t ≥ 1` whose drop rate exceeds `threshold`.
///
/// The drop rate is `(r[t-1] - r[t]) / |r[t-1]|`, or `(r[t-1] - r[t]) / scale`
/// where `|r[t-1]|` is near zero.
pub fn flag_position(rewards: &[f64], threshold: f64, scale: Option<f64>) -> (Option<usize>, Vec<f64>) {
    let scale = scale.unwrap_or_else(|| {
        let m = rewards.iter().map(|r| r.abs()).sum::<f64>() / rewards.len().max(1) as f64;
        if m > 0.0 {
            m
        } else {
            1.0
        }
    });
    let mut rates = vec![0.0; rewards.len()];
    for t in 1..rewards.len() {
        let prev = rewards[t - 1];
        let drop = prev - rewards[t];
        rates[t] = if prev.abs() > NEAR_ZERO { drop / prev.abs() } else { drop / scale };
    }
    let flagged = (1..rewards.len()).find(|&t| rates[t] > threshold);
    (flagged, rates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisResult {
    pub context: usize,
    pub tokens: Vec<TokenId>,
    pub rewards: Vec<f64>,
    pub drop_rates: Vec<f64>,
    pub flagged: Option<usize>,
    pub rewrite: Option<Vec<TokenId>>,
    pub random_position: Option<usize>,
    pub random_rewrite: Option<Vec<TokenId>>,
    /// Metric of the input against the references.
    pub metric_original: f64,
    pub metric_rewrite: Option<f64>,
    pub metric_random: Option<f64>,
}

impl DiagnosisResult {
    /// Metric gain of the located rewrite over the original.
    pub fn improvement(&self) -> Option<f64> {
        self.metric_rewrite.map(|m| m - self.metric_original)
    }

    /// Metric gain of the random-position rewrite over the original.
    pub fn random_improvement(&self) -> Option<f64> {
        self.metric_random.map(|m| m - self.metric_original)
    }

    /// Located gain minus random-position gain.
    pub fn delta_vs_random(&self) -> Option<f64> {
        Some(self.metric_rewrite? - self.metric_random?)
    }
}

fn best_metric(tokens: &[TokenId], references: &[Vec<TokenId>]) -> f64 {
    references
        .iter()
        .map(|r| handcrafted_metric(tokens, r))
        .fold(0.0, f64::max)
}

/// Flags the first large reward drop and resamples the sentence from there
/// with the policy. The baseline resamples from a uniform position in
/// `[1, len-1]` using the same rewrite RNG stream, so the two rewrites differ
/// only in where they start.
#[allow(clippy::too_many_arguments)]
pub fn diagnose_and_rewrite<R: Rng + ?Sized>(
    disc: &DiscriminatorNet,
    policy: &PolicyNet,
    context: &Context,
    tokens: &[TokenId],
    references: &[Vec<TokenId>],
    max_len: usize,
    options: DiagnosisOptions,
    rng: &mut R,
) -> Result<DiagnosisResult> {
    if tokens.is_empty() {
        return Err(invalid("cannot diagnose an empty sequence"));
    }
    let trace = disc.trace(context, tokens)?;
    let rewards: Vec<f64> = match options.signal {
        DropSignal::Density => trace.f.iter().map(|f| f.exp()).collect(),
        DropSignal::F => trace.f.clone(),
        DropSignal::G => trace.g.clone(),
    };
    let (flagged, drop_rates) = flag_position(&rewards, options.threshold, options.scale);
    let metric_original = best_metric(tokens, references);
    let mut result = DiagnosisResult {
        context: context.id,
        tokens: tokens.to_vec(),
        rewards,
        drop_rates,
        flagged,
        rewrite: None,
        random_position: None,
        random_rewrite: None,
        metric_original,
        metric_rewrite: None,
        metric_random: None,
    };
    let seed: u64 = rng.gen();
    let Some(t) = flagged else {
        return Ok(result);
    };
    let rewrite = policy
        .sample_continuation(context, &tokens[..t], &mut derive_rng(seed, 0), max_len)?
        .sample
        .tokens;
    let random_position = derive_rng(seed, 1).gen_range(1..tokens.len());
    let random_rewrite = policy
        .sample_continuation(context, &tokens[..random_position], &mut derive_rng(seed, 0), max_len)?
        .sample
        .tokens;
    result.metric_rewrite = Some(best_metric(&rewrite, references));
    result.metric_random = Some(best_metric(&random_rewrite, references));
    result.rewrite = Some(rewrite);
    result.random_position = Some(random_position);
    result.random_rewrite = Some(random_rewrite);
    Ok(result)
}

/// Replaces one content token at a uniform position in `[1, len-2]` (never
/// the first token or a trailing EOS) with a uniform token of a different
/// synonym class. Returns the corrupted sequence and the position, or `None`
/// when no position qualifies.
pub fn inject_wrong_token<R: Rng + ?Sized>(
    vocab: &crate::world::Vocabulary,
    tokens: &[TokenId],
    rng: &mut R,
) -> Option<(Vec<TokenId>, usize)> {
    use rand::seq::SliceRandom;
    let end = if tokens.last() == Some(&crate::world::EOS) {
        tokens.len() - 1
    } else {
        tokens.len()
    };
    let candidates: Vec<usize> = (1..end).filter(|&k| vocab.class_of(tokens[k]).is_some()).collect();
    let &pos = candidates.choose(rng)?;
    let class = vocab.class_of(tokens[pos]);
    let pool: Vec<TokenId> = vocab.content_tokens().filter(|&t| vocab.class_of(t) != class).collect();
    let &wrong = pool.choose(rng)?;
    let mut out = tokens.to_vec();
    out[pos] = wrong;
    Some((out, pos))
}
