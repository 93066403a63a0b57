use crate::error::Result;
use crate::models::{PolicyNet, RecurrentState};
use crate::numerics::log_softmax;
use crate::world::{GrammarWorld, TokenId, BOS};

/// `KL(p_true ‖ π)` over whole sentences for one context, by enumerating the
/// true support.
///
/// π is a softmax and so covers every sentence; sentences outside the true
/// support contribute nothing in this direction. Shared prefixes of the sorted
/// support are evaluated once.
pub fn exact_policy_kl(world: &GrammarWorld, policy: &PolicyNet, context: usize, cap: usize) -> Result<f64> {
    let support = world.support(context, cap)?;
    let ctx = world.context(context)?;
    // stack[k] = (state after reading k tokens of the current prefix, Σ log π of those tokens)
    let mut stack: Vec<(RecurrentState, f64)> = vec![(policy.init_state(ctx)?, 0.0)];
    let mut prev: &[TokenId] = &[];
    let mut kl = 0.0;
    for (tokens, p) in &support {
        let common = prev.iter().zip(tokens).take_while(|(a, b)| a == b).count();
        stack.truncate(common + 1);
        for k in common..tokens.len() {
            let (state, lp) = &stack[k];
            let input = if k == 0 { BOS } else { tokens[k - 1] };
            let (next, logits) = policy.step(state, input)?;
            let log_pi = log_softmax(&logits)?[tokens[k]];
            stack.push((next, lp + log_pi));
        }
        let log_pi = stack[tokens.len()].1;
        kl += p * (p.ln() - log_pi);
        prev = tokens;
    }
    Ok(kl.max(0.0))
}

/// Per-context KL for every context of the world.
pub fn policy_kl_by_context(world: &GrammarWorld, policy: &PolicyNet, cap: usize) -> Result<Vec<f64>> {
    (0..world.contexts().len())
        .map(|c| exact_policy_kl(world, policy, c, cap))
        .collect()
}
