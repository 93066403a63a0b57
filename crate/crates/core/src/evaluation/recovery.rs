use rand::Rng;
use serde::{Deserialize, Serialize};

use super::correlation::pearson;
use crate::error::{invalid, Result};
use crate::models::DiscriminatorNet;
use crate::world::{GrammarWorld, TokenId};

/// One (context, prefix, token) probe with its learned and true reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryProbe {
    pub context: usize,
    pub prefix: Vec<TokenId>,
    pub token: TokenId,
    pub learned: f64,
    pub truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub probes: Vec<RecoveryProbe>,
    pub pearson: f64,
}

/// Correlates the learned per-token reward `g` with the world's true token
/// reward. Each probe takes the prefix of a true sentence at a uniform cut;
/// with probability `valid_fraction` the token is a uniform valid
/// continuation, otherwise a uniform non-BOS token.
pub fn reward_recovery<R: Rng + ?Sized>(
    world: &GrammarWorld,
    disc: &DiscriminatorNet,
    probes: usize,
    valid_fraction: f64,
    rng: &mut R,
) -> Result<RecoveryReport> {
    if !(0.0..=1.0).contains(&valid_fraction) {
        return Err(invalid("valid_fraction must lie in [0, 1]"));
    }
    let vocab = world.vocab();
    let pool: Vec<TokenId> = (0..vocab.len()).filter(|&t| t != vocab.bos()).collect();
    let mut out = Vec::with_capacity(probes);
    for _ in 0..probes {
        let (ctx, s) = world.sample_pair(rng);
        let cut = rng.gen_range(0..s.tokens.len());
        let prefix = &s.tokens[..cut];
        let token = if rng.gen_bool(valid_fraction) {
            let valid = world.valid_continuations(ctx.id, prefix)?;
            valid[rng.gen_range(0..valid.len())]
        } else {
            pool[rng.gen_range(0..pool.len())]
        };
        let mut seq = prefix.to_vec();
        seq.push(token);
        let learned = disc.trace(ctx, &seq)?.g[cut];
        out.push(RecoveryProbe {
            context: ctx.id,
            prefix: prefix.to_vec(),
            token,
            learned,
            truth: world.true_token_reward(ctx.id, prefix, token)?,
        });
    }
    let xs: Vec<f64> = out.iter().map(|p| p.learned).collect();
    let ys: Vec<f64> = out.iter().map(|p| p.truth).collect();
    Ok(RecoveryReport {
        pearson: pearson(&xs, &ys)?,
        probes: out,
    })
}
