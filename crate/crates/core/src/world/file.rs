//! JSON world definition.
//!
//! ```json
//! {
//!   "version": 1,
//!   "seed": 7,
//!   "max_length": 8,
//!   "embedding_dim": 8,
//!   "context_dim": 8,
//!   "bos": "<bos>", "eos": "<eos>",
//!   "classes": [
//!     {"name": "person", "members": ["man", "woman"], "weights": [0.5, 0.5], "object": true}
//!   ],
//!   "embeddings": {"man": [0.1, ...]},
//!   "contexts": [
//!     {"name": "c0", "feature": [0.2, ...],
//!      "templates": [{"weight": 1.0, "slots": ["@person", "runs"]}]}
//!   ],
//!   "reward": {"distance_scale": 2.0}
//! }
//! ```
//!
//! A slot starting with `@` names a class; anything else is a fixed token.
//! `weights`, `object`, `embeddings`, `feature` and `reward` are optional.
//! Missing embeddings and features are generated from `seed`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grammar::{Context, GrammarWorld, Slot, Template};
use super::vocab::{SynonymClass, Vocabulary};
use super::{generate, BOS, EOS};
use crate::error::{invalid, Error, Result};

pub const WORLD_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub max_length: usize,
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_dim")]
    pub context_dim: usize,
    #[serde(default = "default_bos")]
    pub bos: String,
    #[serde(default = "default_eos")]
    pub eos: String,
    pub classes: Vec<ClassDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<BTreeMap<String, Vec<f64>>>,
    pub contexts: Vec<ContextDef>,
    #[serde(default)]
    pub reward: RewardDef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassDef {
    pub name: String,
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub object: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextDef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<Vec<f64>>,
    pub templates: Vec<TemplateDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateDef {
    pub weight: f64,
    pub slots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardDef {
    pub distance_scale: f64,
}

impl Default for RewardDef {
    fn default() -> Self {
        Self { distance_scale: 2.0 }
    }
}

fn default_dim() -> usize {
    8
}
fn default_bos() -> String {
    "<bos>".into()
}
fn default_eos() -> String {
    "<eos>".into()
}

impl WorldFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read world file {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WorldFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.version != WORLD_FORMAT_VERSION {
            return Err(Error::Version {
                expected: WORLD_FORMAT_VERSION,
                found: file.version,
            });
        }
        Ok(file)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn build(&self) -> Result<GrammarWorld> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut names = vec![self.bos.clone(), self.eos.clone()];
        let mut classes = Vec::with_capacity(self.classes.len());
        for def in &self.classes {
            let mut members = Vec::with_capacity(def.members.len());
            for m in &def.members {
                members.push(names.len());
                names.push(m.clone());
            }
            let weights = match &def.weights {
                Some(w) => w.clone(),
                None => vec![1.0 / members.len() as f64; members.len()],
            };
            classes.push(SynonymClass {
                name: def.name.clone(),
                members,
                weights,
                object: def.object,
            });
        }
        let embeddings = match &self.embeddings {
            Some(map) => {
                let mut out = Vec::with_capacity(names.len());
                for (i, n) in names.iter().enumerate() {
                    match map.get(n) {
                        Some(e) => out.push(e.clone()),
                        None if i == BOS || i == EOS => out.push(vec![0.0; self.embedding_dim]),
                        None => return Err(invalid(format!("no embedding for token '{n}'"))),
                    }
                }
                out
            }
            None => generate::isotropic_embeddings(&classes, names.len(), self.embedding_dim, &mut rng)?,
        };
        let vocab = Vocabulary::new(names, classes, embeddings)?;
        let mut contexts = Vec::with_capacity(self.contexts.len());
        let mut templates = Vec::with_capacity(self.contexts.len());
        for (id, def) in self.contexts.iter().enumerate() {
            let feature = match &def.feature {
                Some(f) => f.clone(),
                None => generate::context_feature(self.context_dim, &mut rng),
            };
            contexts.push(Context {
                id,
                name: def.name.clone(),
                feature,
            });
            let mut list = Vec::with_capacity(def.templates.len());
            for t in &def.templates {
                let slots = t
                    .slots
                    .iter()
                    .map(|s| parse_slot(&vocab, s))
                    .collect::<Result<Vec<_>>>()?;
                list.push(Template {
                    slots,
                    weight: t.weight,
                });
            }
            templates.push(list);
        }
        GrammarWorld::new(vocab, contexts, templates, self.max_length, self.reward.distance_scale)
    }
}

fn parse_slot(vocab: &Vocabulary, s: &str) -> Result<Slot> {
    if let Some(class) = s.strip_prefix('@') {
        vocab
            .class_index(class)
            .map(Slot::Class)
            .ok_or_else(|| invalid(format!("unknown class '@{class}'")))
    } else {
        vocab
            .id(s)
            .map(Slot::Token)
            .ok_or_else(|| invalid(format!("unknown token '{s}'")))
    }
}

impl GrammarWorld {
    pub fn load(path: &Path) -> Result<Self> {
        WorldFile::load(path)?.build()
    }

    /// Serializable description with explicit embeddings and features.
    pub fn to_file(&self) -> WorldFile {
        let vocab = self.vocab();
        let classes = vocab
            .classes()
            .iter()
            .map(|c| ClassDef {
                name: c.name.clone(),
                members: c.members.iter().map(|&m| vocab.name(m).to_string()).collect(),
                weights: Some(c.weights.clone()),
                object: c.object,
            })
            .collect();
        let embeddings = (0..vocab.len())
            .map(|t| (vocab.name(t).to_string(), vocab.embedding(t).to_vec()))
            .collect();
        let contexts = self
            .contexts()
            .iter()
            .map(|c| ContextDef {
                name: c.name.clone(),
                feature: Some(c.feature.clone()),
                templates: self
                    .templates(c.id)
                    .iter()
                    .map(|t| TemplateDef {
                        weight: t.weight,
                        slots: t
                            .slots
                            .iter()
                            .map(|s| match *s {
                                Slot::Class(ci) => format!("@{}", vocab.classes()[ci].name),
                                Slot::Token(tok) => vocab.name(tok).to_string(),
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        WorldFile {
            version: WORLD_FORMAT_VERSION,
            seed: 0,
            max_length: self.max_len(),
            embedding_dim: vocab.embedding_dim(),
            context_dim: self.context_dim(),
            bos: vocab.name(BOS).to_string(),
            eos: vocab.name(EOS).to_string(),
            classes,
            embeddings: Some(embeddings),
            contexts,
            reward: RewardDef {
                distance_scale: self.distance_scale(),
            },
        }
    }
}
