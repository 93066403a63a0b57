use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::compactness::{sentence_score, SentenceScorer};
use crate::error::{invalid, Result};
use crate::models::{DiscriminatorNet, PolicyNet};
use crate::world::{Context, TokenId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSequence {
    pub tokens: Vec<TokenId>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub context: usize,
    pub ranked: Vec<RankedSequence>,
    /// Fewer than `k` distinct sequences were drawn.
    pub shortfall: bool,
}

/// Draws `samples` sequences, deduplicates, and returns the `k` best by
/// sentence score, best first.
#[allow(clippy::too_many_arguments)]
pub fn top_k_by_reward<R: Rng + ?Sized>(
    policy: &PolicyNet,
    disc: &DiscriminatorNet,
    context: &Context,
    k: usize,
    samples: usize,
    max_len: usize,
    scorer: SentenceScorer,
    rng: &mut R,
) -> Result<TopK> {
    if k == 0 || samples < k {
        return Err(invalid("top-k needs 1 <= k <= samples"));
    }
    let mut seen = HashSet::new();
    let mut ranked = Vec::new();
    for _ in 0..samples {
        let tokens = policy.sample_sequence(context, rng, max_len)?.sample.tokens;
        if seen.insert(tokens.clone()) {
            let score = sentence_score(disc, context, &tokens, scorer)?;
            ranked.push(RankedSequence { tokens, score });
        }
    }
    // Stable sort keeps first-drawn order among equal scores.
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    let shortfall = ranked.len() < k;
    ranked.truncate(k);
    Ok(TopK {
        context: context.id,
        ranked,
        shortfall,
    })
}
