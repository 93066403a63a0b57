use std::collections::HashMap;

use crate::world::{TokenId, BOS, EOS};

/// Unigram-overlap F1 between two token multisets, ignoring BOS/EOS.
///
/// Stands in for BLEU/CIDEr/SPICE as the fixed sequence reward of the RL
/// baseline and as the quality score of rewrites.
pub fn handcrafted_metric(generated: &[TokenId], reference: &[TokenId]) -> f64 {
    let count = |s: &[TokenId]| {
        let mut m: HashMap<TokenId, usize> = HashMap::new();
        for &t in s.iter().filter(|&&t| t != BOS && t != EOS) {
            *m.entry(t).or_default() += 1;
        }
        m
    };
    let g = count(generated);
    let r = count(reference);
    let g_total: usize = g.values().sum();
    let r_total: usize = r.values().sum();
    if g_total == 0 || r_total == 0 {
        return f64::from(u8::from(g_total == r_total));
    }
    let overlap: usize = g
        .iter()
        .map(|(t, &c)| c.min(r.get(t).copied().unwrap_or(0)))
        .sum();
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / g_total as f64;
    let recall = overlap as f64 / r_total as f64;
    2.0 * precision * recall / (precision + recall)
}
