use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type TokenId = usize;

/// A set of interchangeable tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynonymClass {
    pub name: String,
    pub members: Vec<TokenId>,
    /// Probability of each member when the class fills a template slot.
    pub weights: Vec<f64>,
    /// Object classes are the ones compactness probes replace.
    pub object: bool,
}

/// Token inventory with synonym classes and embeddings.
///
/// Ids `0` and `1` are always BOS and EOS; every other token belongs to
/// exactly one synonym class.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    names: Vec<String>,
    classes: Vec<SynonymClass>,
    class_of: Vec<Option<usize>>,
    embeddings: Vec<Vec<f64>>,
}

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;

impl Vocabulary {
    pub fn new(
        names: Vec<String>,
        classes: Vec<SynonymClass>,
        embeddings: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = names.len();
        if n < 3 {
            return Err(invalid("vocabulary needs BOS, EOS and at least one content token"));
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(invalid(format!("duplicate token name '{a}'")));
            }
        }
        if embeddings.len() != n {
            return Err(invalid("one embedding per token required"));
        }
        let dim = embeddings[0].len();
        if dim == 0
            || embeddings
                .iter()
                .any(|e| e.len() != dim || e.iter().any(|v| !v.is_finite()))
        {
            return Err(invalid("embeddings must share a nonzero dimension and be finite"));
        }
        let mut class_of = vec![None; n];
        for (ci, class) in classes.iter().enumerate() {
            if class.members.is_empty() || class.members.len() != class.weights.len() {
                return Err(invalid(format!("class '{}' needs one weight per member", class.name)));
            }
            let total: f64 = class.weights.iter().sum();
            if class.weights.iter().any(|&w| !(w > 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(invalid(format!(
                    "class '{}' weights must be positive and sum to 1",
                    class.name
                )));
            }
            for &m in &class.members {
                if m == BOS || m == EOS || m >= n {
                    return Err(invalid(format!("class '{}' has an invalid member", class.name)));
                }
                if class_of[m].replace(ci).is_some() {
                    return Err(invalid(format!("token '{}' is in two classes", names[m])));
                }
            }
        }
        if let Some(orphan) = (2..n).find(|&t| class_of[t].is_none()) {
            return Err(invalid(format!("token '{}' belongs to no class", names[orphan])));
        }
        Ok(Self {
            names,
            classes,
            class_of,
            embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn bos(&self) -> TokenId {
        BOS
    }

    pub fn eos(&self) -> TokenId {
        EOS
    }

    pub fn name(&self, t: TokenId) -> &str {
        &self.names[t]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<TokenId> {
        self.names.iter().position(|n| n == name)
    }

    pub fn classes(&self) -> &[SynonymClass] {
        &self.classes
    }

    pub fn class_of(&self, t: TokenId) -> Option<usize> {
        self.class_of.get(t).copied().flatten()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn embedding(&self, t: TokenId) -> &[f64] {
        &self.embeddings[t]
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings[0].len()
    }

    /// Probability of `t` when its class fills a slot.
    pub fn member_weight(&self, t: TokenId) -> f64 {
        match self.class_of(t) {
            Some(c) => {
                let class = &self.classes[c];
                let pos = class.members.iter().position(|&m| m == t).unwrap_or(0);
                class.weights[pos]
            }
            None => 0.0,
        }
    }

    pub fn content_tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        2..self.len()
    }

    pub fn check(&self, t: TokenId) -> Result<()> {
        if t < self.len() {
            Ok(())
        } else {
            Err(invalid(format!("token id {t} out of range")))
        }
    }

    /// Euclidean distance between two token embeddings.
    pub fn embedding_distance(&self, a: TokenId, b: TokenId) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        Ok(euclidean(&self.embeddings[a], &self.embeddings[b]))
    }

    /// `(max intra-class distance, min inter-class distance)` over content tokens.
    pub fn class_separation(&self) -> (f64, f64) {
        let mut intra: f64 = 0.0;
        let mut inter = f64::INFINITY;
        for a in self.content_tokens() {
            for b in (a + 1)..self.len() {
                let d = euclidean(&self.embeddings[a], &self.embeddings[b]);
                if self.class_of(a) == self.class_of(b) {
                    intra = intra.max(d);
                } else {
                    inter = inter.min(d);
                }
            }
        }
        (intra, inter)
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
