use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{TokenId, BOS, EOS};

/// Corpus-level diversity of generated sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiversityReport {
    /// Distinct content tokens generated over distinct content tokens in the
    /// references; may exceed 1.
    pub coverage: f64,
    /// Fraction of generated sequences absent from the training corpus.
    pub novel_ratio: f64,
    /// Number of distinct generated sequences.
    pub distinct: usize,
    /// Number of generated sequences.
    pub total: usize,
}

fn content_tokens<S: AsRef<[TokenId]>>(corpus: &[S]) -> HashSet<TokenId> {
    corpus
        .iter()
        .flat_map(|s| s.as_ref().iter().copied())
        .filter(|&t| t != BOS && t != EOS)
        .collect()
}

/// Vocabulary coverage, novel-sequence ratio and distinct count. Sequences
/// compare by their full token lists, so a truncated sample (no EOS) never
/// matches a training sentence.
pub fn diversity_metrics<G, T, R>(generated: &[G], training: &[T], references: &[R]) -> Result<DiversityReport>
where
    G: AsRef<[TokenId]>,
    T: AsRef<[TokenId]>,
    R: AsRef<[TokenId]>,
{
    if generated.is_empty() || references.is_empty() {
        return Err(Error::InvalidInput("diversity needs non-empty corpora".into()));
    }
    let reference_vocab = content_tokens(references);
    if reference_vocab.is_empty() {
        return Err(Error::InvalidInput("references contain no content tokens".into()));
    }
    let coverage = content_tokens(generated).len() as f64 / reference_vocab.len() as f64;
    let train: HashSet<&[TokenId]> = training.iter().map(|s| s.as_ref()).collect();
    let novel = generated.iter().filter(|s| !train.contains(s.as_ref())).count();
    let distinct = generated.iter().map(|s| s.as_ref()).collect::<HashSet<_>>().len();
    Ok(DiversityReport {
        coverage,
        novel_ratio: novel as f64 / generated.len() as f64,
        distinct,
        total: generated.len(),
    })
}
