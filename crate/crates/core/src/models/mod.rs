//! The two players: a recurrent softmax policy and a discriminator whose
//! decision is `D = sigmoid(f - log π)` with shaped reward
//! `f = g + γ·h(s') - h(s)`.

mod discriminator;
mod policy;
mod recurrent;

pub use discriminator::{shaped, DiscriminatorNet, DiscriminatorTrace};
pub use policy::{ModelDims, PolicyNet, PolicyRollout, PolicyTrace, RecurrentState};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::sigmoid;
use crate::world::{Context, TokenId};

/// `p_θ = exp(f)`, the discriminator's density estimate.
#[inline]
pub fn estimated_density(f: f64) -> f64 {
    f.exp()
}

/// `D = sigmoid(f - log π)`.
#[inline]
pub fn decision_boundary(f: f64, log_pi: f64) -> f64 {
    sigmoid(f - log_pi)
}

/// One position of a [`RewardBreakdown`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenReward {
    pub position: usize,
    pub token: TokenId,
    pub g: f64,
    pub h: f64,
    pub h_next: f64,
    pub f: f64,
    pub log_pi: f64,
    pub d: f64,
}

/// Word-wise reward record of a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub context: usize,
    pub gamma: f64,
    pub tokens: Vec<TokenReward>,
    pub sum_f: f64,
    pub sum_g: f64,
    /// `Σ (f - log π)`, the summed decision logits.
    pub sum_logit: f64,
}

impl RewardBreakdown {
    pub fn f_values(&self) -> Vec<f64> {
        self.tokens.iter().map(|t| t.f).collect()
    }

    pub fn g_values(&self) -> Vec<f64> {
        self.tokens.iter().map(|t| t.g).collect()
    }

    /// Checks `f = g + γ h' - h` and `D = sigmoid(f - log π)` bit for bit.
    pub fn is_consistent(&self) -> bool {
        self.tokens.iter().all(|t| {
            t.f == shaped(t.g, t.h, t.h_next, self.gamma) && t.d == decision_boundary(t.f, t.log_pi)
        }) && self.tokens.windows(2).all(|w| w[0].h_next == w[1].h)
    }
}

/// Scores `tokens` with both players.
pub fn reward_breakdown(
    disc: &DiscriminatorNet,
    policy: &PolicyNet,
    context: &Context,
    tokens: &[TokenId],
) -> Result<RewardBreakdown> {
    let trace = disc.trace(context, tokens)?;
    let log_pi = policy.sequence_log_probs(context, tokens)?;
    let rows: Vec<TokenReward> = (0..tokens.len())
        .map(|k| TokenReward {
            position: k,
            token: tokens[k],
            g: trace.g[k],
            h: trace.shaping[k],
            h_next: trace.shaping[k + 1],
            f: trace.f[k],
            log_pi: log_pi[k],
            d: decision_boundary(trace.f[k], log_pi[k]),
        })
        .collect();
    Ok(RewardBreakdown {
        context: context.id,
        gamma: disc.gamma(),
        sum_f: rows.iter().map(|r| r.f).sum(),
        sum_g: rows.iter().map(|r| r.g).sum(),
        sum_logit: rows.iter().map(|r| r.f - r.log_pi).sum(),
        tokens: rows,
    })
}
