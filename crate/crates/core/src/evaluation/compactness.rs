use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::correlation::{correlations, CorrelationTriple};
use crate::error::{Error, Result};
use crate::models::DiscriminatorNet;
use crate::world::{Context, GrammarWorld, SequenceSample, TokenId};

/// How a sentence is scored from per-token rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceScorer {
    /// Sum of shaped rewards `f`.
    #[default]
    SumF,
    /// Sum of unshaped word rewards `g`.
    SumG,
}

/// Which token of a sentence is replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeTarget {
    /// First token belonging to a class marked as an object class.
    #[default]
    FirstObject,
    /// First token belonging to any synonym class.
    FirstContent,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompactnessOptions {
    pub scorer: SentenceScorer,
    pub target: ProbeTarget,
}

/// One replacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactnessProbe {
    pub sentence: usize,
    pub context: usize,
    pub position: usize,
    pub original: TokenId,
    pub replacement: TokenId,
    /// `|score(original) - score(replaced)|`.
    pub delta: f64,
    pub distance: f64,
    pub same_class: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactnessReport {
    pub probes: Vec<CompactnessProbe>,
    /// Correlations of delta against distance for same-class replacements.
    pub same_class: Option<CorrelationTriple>,
    pub different_class: Option<CorrelationTriple>,
    pub skipped: usize,
    pub warnings: Vec<String>,
}

impl CompactnessReport {
    /// Pearson correlation over same-class probes.
    pub fn rp_same(&self) -> Option<f64> {
        self.same_class.map(|c| c.pearson)
    }

    /// Pearson correlation over different-class probes.
    pub fn rp_different(&self) -> Option<f64> {
        self.different_class.map(|c| c.pearson)
    }
}

/// Sentence score under the discriminator.
pub fn sentence_score(disc: &DiscriminatorNet, context: &Context, tokens: &[TokenId], scorer: SentenceScorer) -> Result<f64> {
    let t = disc.trace(context, tokens)?;
    Ok(match scorer {
        SentenceScorer::SumF => t.f.iter().sum(),
        SentenceScorer::SumG => t.g.iter().sum(),
    })
}

/// Replaces the target token of each sentence once with a random synonym and
/// once with a random token of another class, and correlates the change in
/// sentence score with the embedding distance of the swap, per bucket.
pub fn compactness_probe<R: Rng + ?Sized>(
    world: &GrammarWorld,
    disc: &DiscriminatorNet,
    corpus: &[SequenceSample],
    options: CompactnessOptions,
    rng: &mut R,
) -> Result<CompactnessReport> {
    compactness_with(
        world,
        corpus,
        options.target,
        |ctx, tokens| sentence_score(disc, ctx, tokens, options.scorer),
        rng,
    )
}

/// [`compactness_probe`] with an arbitrary sentence scorer.
pub fn compactness_with<R, F>(
    world: &GrammarWorld,
    corpus: &[SequenceSample],
    target: ProbeTarget,
    mut score: F,
    rng: &mut R,
) -> Result<CompactnessReport>
where
    R: Rng + ?Sized,
    F: FnMut(&Context, &[TokenId]) -> Result<f64>,
{
    let vocab = world.vocab();
    let mut probes = Vec::new();
    let mut skipped = 0;
    for (i, s) in corpus.iter().enumerate() {
        let ctx = world.context(s.context)?;
        let found = s.tokens.iter().enumerate().find_map(|(k, &t)| {
            let c = vocab.class_of(t)?;
            (target == ProbeTarget::FirstContent || vocab.classes()[c].object).then_some((k, t, c))
        });
        let Some((pos, original, class)) = found else {
            skipped += 1;
            continue;
        };
        let base = score(ctx, &s.tokens)?;
        let synonyms: Vec<TokenId> = vocab.classes()[class]
            .members
            .iter()
            .copied()
            .filter(|&t| t != original)
            .collect();
        let others: Vec<TokenId> = vocab.content_tokens().filter(|&t| vocab.class_of(t) != Some(class)).collect();
        for (pool, same_class) in [(synonyms, true), (others, false)] {
            let Some(&replacement) = pool.choose(rng) else {
                continue;
            };
            if replacement == original {
                continue;
            }
            let mut swapped = s.tokens.clone();
            swapped[pos] = replacement;
            probes.push(CompactnessProbe {
                sentence: i,
                context: s.context,
                position: pos,
                original,
                replacement,
                delta: (base - score(ctx, &swapped)?).abs(),
                distance: vocab.embedding_distance(original, replacement)?,
                same_class,
            });
        }
    }
    if probes.is_empty() {
        return Err(Error::DegenerateInput("no sentence has a replaceable token".into()));
    }
    let mut warnings = Vec::new();
    let mut bucket = |same: bool, label: &str| {
        let (d, x): (Vec<f64>, Vec<f64>) = probes
            .iter()
            .filter(|p| p.same_class == same)
            .map(|p| (p.delta, p.distance))
            .unzip();
        if d.len() < 2 {
            warnings.push(format!("{label}: fewer than two probes"));
            return None;
        }
        match correlations(&x, &d) {
            Ok(c) => Some(c),
            Err(e) => {
                warnings.push(format!("{label}: {e}"));
                None
            }
        }
    };
    let same_class = bucket(true, "same-class");
    let different_class = bucket(false, "different-class");
    for w in &warnings {
        log::warn!("compactness {w}");
    }
    Ok(CompactnessReport {
        probes,
        same_class,
        different_class,
        skipped,
        warnings,
    })
}
