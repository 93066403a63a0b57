use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{euclidean, TokenId, Vocabulary, EOS};
use crate::error::{invalid, Error, Result};

/// One position of a sentence template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Any member of the class, drawn by the class weights.
    Class(usize),
    /// Exactly this token.
    Token(TokenId),
}

/// Slot sequence; EOS is implied after the last slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub slots: Vec<Slot>,
    pub weight: f64,
}

/// The stand-in for an image: an id and a fixed feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub id: usize,
    pub name: String,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    GroundTruth,
    Generated,
}

/// A token sequence for one context, excluding BOS.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SequenceSample {
    pub context: usize,
    pub tokens: Vec<TokenId>,
    pub source: SampleSource,
}

impl SequenceSample {
    /// Ends with EOS (unless a generated sample hit the length cap), contains
    /// no other EOS and no BOS.
    pub fn validate(&self, world: &GrammarWorld) -> Result<()> {
        let vocab = world.vocab();
        if self.context >= world.contexts().len() {
            return Err(invalid(format!("unknown context {}", self.context)));
        }
        if self.tokens.is_empty() || self.tokens.len() > world.max_len() {
            return Err(invalid(format!(
                "sequence length {} outside 1..={}",
                self.tokens.len(),
                world.max_len()
            )));
        }
        for &t in &self.tokens {
            vocab.check(t)?;
            if t == vocab.bos() {
                return Err(invalid("BOS inside a sequence"));
            }
        }
        let body = &self.tokens[..self.tokens.len() - 1];
        if body.contains(&EOS) {
            return Err(invalid("EOS before the end of a sequence"));
        }
        let last = *self.tokens.last().unwrap();
        if last != EOS && !(self.source == SampleSource::Generated && self.tokens.len() == world.max_len()) {
            return Err(invalid("sequence must end with EOS"));
        }
        Ok(())
    }

    pub fn ends_with_eos(&self) -> bool {
        self.tokens.last() == Some(&EOS)
    }
}

/// Synthetic environment with an exactly known sentence distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GrammarWorld {
    vocab: Vocabulary,
    contexts: Vec<Context>,
    templates: Vec<Vec<Template>>,
    max_len: usize,
    distance_scale: f64,
}

impl GrammarWorld {
    pub fn new(
        vocab: Vocabulary,
        contexts: Vec<Context>,
        templates: Vec<Vec<Template>>,
        max_len: usize,
        distance_scale: f64,
    ) -> Result<Self> {
        if contexts.is_empty() || contexts.len() != templates.len() {
            return Err(invalid("each context needs a template list"));
        }
        let fdim = contexts[0].feature.len();
        for (i, c) in contexts.iter().enumerate() {
            if c.id != i {
                return Err(invalid("context ids must be 0..n in order"));
            }
            if c.feature.len() != fdim || fdim == 0 || c.feature.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("context '{}' has a bad feature vector", c.name)));
            }
        }
        if !(distance_scale > 0.0) {
            return Err(invalid("reward distance scale must be positive"));
        }
        for (ci, list) in templates.iter().enumerate() {
            if list.is_empty() {
                return Err(invalid(format!("context {ci} has no templates")));
            }
            let total: f64 = list.iter().map(|t| t.weight).sum();
            if list.iter().any(|t| !(t.weight >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("template weights of context {ci} must sum to 1")));
            }
            for t in list {
                if t.slots.len() + 1 > max_len {
                    return Err(invalid(format!(
                        "template in context {ci} does not end within {max_len} tokens"
                    )));
                }
                for slot in &t.slots {
                    match *slot {
                        Slot::Class(c) if c >= vocab.classes().len() => {
                            return Err(invalid("template references an unknown class"))
                        }
                        Slot::Token(tok) if vocab.class_of(tok).is_none() => {
                            return Err(invalid("fixed template token must be a content token"))
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(Self {
            vocab,
            contexts,
            templates,
            max_len,
            distance_scale,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn context(&self, id: usize) -> Result<&Context> {
        self.contexts
            .get(id)
            .ok_or_else(|| invalid(format!("unknown context {id}")))
    }

    pub fn templates(&self, context: usize) -> &[Template] {
        &self.templates[context]
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn context_dim(&self) -> usize {
        self.contexts[0].feature.len()
    }

    pub fn distance_scale(&self) -> f64 {
        self.distance_scale
    }

    fn slot_prob(&self, slot: Slot, token: TokenId) -> f64 {
        match slot {
            Slot::Token(t) => f64::from(u8::from(t == token)),
            Slot::Class(c) => {
                if self.vocab.class_of(token) == Some(c) {
                    self.vocab.member_weight(token)
                } else {
                    0.0
                }
            }
        }
    }

    /// Probability that `template` emits `prefix` as its first tokens.
    fn prefix_prob(&self, template: &Template, prefix: &[TokenId]) -> f64 {
        if prefix.len() > template.slots.len() + 1 {
            return 0.0;
        }
        let mut p = 1.0;
        for (i, &tok) in prefix.iter().enumerate() {
            p *= match template.slots.get(i) {
                Some(&slot) => self.slot_prob(slot, tok),
                None => f64::from(u8::from(tok == EOS)),
            };
            if p == 0.0 {
                break;
            }
        }
        p
    }

    /// Draws a sentence for `context` from the true distribution.
    pub fn sample_sentence<R: Rng + ?Sized>(&self, context: usize, rng: &mut R) -> SequenceSample {
        let list = &self.templates[context];
        let template = &list[pick(rng, list.iter().map(|t| t.weight))];
        let mut tokens = Vec::with_capacity(template.slots.len() + 1);
        for slot in &template.slots {
            tokens.push(match *slot {
                Slot::Token(t) => t,
                Slot::Class(c) => {
                    let class = &self.vocab.classes()[c];
                    class.members[pick(rng, class.weights.iter().copied())]
                }
            });
        }
        tokens.push(EOS);
        SequenceSample {
            context,
            tokens,
            source: super::SampleSource::GroundTruth,
        }
    }

    /// Uniform context, then a sentence from the true distribution.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (&Context, SequenceSample) {
        let c = rng.gen_range(0..self.contexts.len());
        (&self.contexts[c], self.sample_sentence(c, rng))
    }

    /// Exact `p_true(tokens | context)` summed over templates.
    pub fn true_sentence_prob(&self, context: usize, tokens: &[TokenId]) -> Result<f64> {
        self.context(context)?;
        for &t in tokens {
            self.vocab.check(t)?;
        }
        Ok(self.templates[context]
            .iter()
            .filter(|t| tokens.len() == t.slots.len() + 1)
            .map(|t| t.weight * self.prefix_prob(t, tokens))
            .sum())
    }

    /// Exact next-token distribution `p_true(· | context, prefix)` as
    /// `(token, probability)` pairs; empty when no template emits `prefix`.
    pub fn next_token_distribution(&self, context: usize, prefix: &[TokenId]) -> Result<Vec<(TokenId, f64)>> {
        self.context(context)?;
        let mut mass: BTreeMap<TokenId, f64> = BTreeMap::new();
        let mut total = 0.0;
        for t in &self.templates[context] {
            let w = t.weight * self.prefix_prob(t, prefix);
            if w == 0.0 || prefix.len() > t.slots.len() {
                continue;
            }
            total += w;
            match t.slots.get(prefix.len()) {
                None => *mass.entry(EOS).or_default() += w,
                Some(&Slot::Token(tok)) => *mass.entry(tok).or_default() += w,
                Some(&Slot::Class(c)) => {
                    let class = &self.vocab.classes()[c];
                    for (&m, &cw) in class.members.iter().zip(&class.weights) {
                        *mass.entry(m).or_default() += w * cw;
                    }
                }
            }
        }
        if total == 0.0 {
            return Ok(Vec::new());
        }
        Ok(mass.into_iter().map(|(t, m)| (t, m / total)).collect())
    }

    /// Tokens that continue `prefix` along at least one template.
    pub fn valid_continuations(&self, context: usize, prefix: &[TokenId]) -> Result<Vec<TokenId>> {
        Ok(self
            .next_token_distribution(context, prefix)?
            .into_iter()
            .map(|(t, _)| t)
            .collect())
    }

    /// Ground-truth reward of appending `token` to `prefix`: 1 for a valid
    /// continuation, `max(0, 1 - d/scale)` with `d` the embedding distance to
    /// the nearest valid continuation otherwise, 0 after an ungrammatical prefix.
    pub fn true_token_reward(&self, context: usize, prefix: &[TokenId], token: TokenId) -> Result<f64> {
        self.vocab.check(token)?;
        let valid = self.valid_continuations(context, prefix)?;
        if valid.is_empty() {
            return Ok(0.0);
        }
        if valid.contains(&token) {
            return Ok(1.0);
        }
        let nearest = valid
            .iter()
            .map(|&v| euclidean(self.vocab.embedding(token), self.vocab.embedding(v)))
            .fold(f64::INFINITY, f64::min);
        Ok((1.0 - nearest / self.distance_scale).max(0.0))
    }

    pub fn embedding_distance(&self, a: TokenId, b: TokenId) -> Result<f64> {
        self.vocab.embedding_distance(a, b)
    }

    /// Every sentence with nonzero true probability, merged across templates,
    /// in lexicographic token order. Fails when more than `cap` sentences exist.
    pub fn support(&self, context: usize, cap: usize) -> Result<Vec<(Vec<TokenId>, f64)>> {
        self.context(context)?;
        let mut out: BTreeMap<Vec<TokenId>, f64> = BTreeMap::new();
        for t in &self.templates[context] {
            if t.weight == 0.0 {
                continue;
            }
            let count: usize = t
                .slots
                .iter()
                .map(|s| match s {
                    Slot::Token(_) => 1,
                    Slot::Class(c) => self.vocab.classes()[*c].members.len(),
                })
                .product();
            if count.saturating_add(out.len()) > cap {
                return Err(Error::Unsupported(format!(
                    "context {context} has more than {cap} generable sentences"
                )));
            }
            let mut partial: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), t.weight)];
            for slot in &t.slots {
                let choices: Vec<(TokenId, f64)> = match *slot {
                    Slot::Token(tok) => vec![(tok, 1.0)],
                    Slot::Class(c) => {
                        let class = &self.vocab.classes()[c];
                        class.members.iter().copied().zip(class.weights.iter().copied()).collect()
                    }
                };
                partial = partial
                    .into_iter()
                    .flat_map(|(seq, p)| {
                        choices.iter().map(move |&(tok, w)| {
                            let mut s = seq.clone();
                            s.push(tok);
                            (s, p * w)
                        })
                    })
                    .collect();
            }
            for (mut seq, p) in partial {
                seq.push(EOS);
                *out.entry(seq).or_default() += p;
            }
        }
        Ok(out.into_iter().collect())
    }
}

/// Index drawn proportionally to `weights`.
pub(crate) fn pick<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
            if u < w {
                return i;
            }
        }
        u -= w;
    }
    last
}
