//! Seeded construction of embeddings, context features and the default world.

use rand::Rng;
use rand_distr::StandardNormal;

use super::grammar::{Context, GrammarWorld, Slot, Template};
use super::vocab::{SynonymClass, Vocabulary};
use crate::error::{invalid, Result};

const MEMBER_RADIUS: f64 = 0.1;
const MIN_CENTROID_GAP: f64 = 0.5;

fn unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Unit vectors with pairwise distance at least `gap`.
fn spread_on_sphere<R: Rng + ?Sized>(count: usize, dim: usize, gap: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 100_000 {
            return Err(invalid(format!(
                "cannot place {count} centroids {gap} apart in {dim} dimensions"
            )));
        }
        let v = unit_vector(dim, rng);
        if out.iter().all(|c| super::vocab::euclidean(c, &v) >= gap) {
            out.push(v);
        }
    }
    Ok(out)
}

/// Class centroids spread on the unit sphere, members at distance 0.1 from
/// their centroid in a random direction. BOS and EOS sit at the origin.
pub(crate) fn isotropic_embeddings<R: Rng + ?Sized>(
    classes: &[SynonymClass],
    vocab_len: usize,
    dim: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let centroids = spread_on_sphere(classes.len(), dim, MIN_CENTROID_GAP, rng)?;
    let mut emb = vec![vec![0.0; dim]; vocab_len];
    for (class, c) in classes.iter().zip(&centroids) {
        for &m in &class.members {
            let u = unit_vector(dim, rng);
            emb[m] = c.iter().zip(&u).map(|(a, b)| a + MEMBER_RADIUS * b).collect();
        }
    }
    Ok(emb)
}

pub(crate) fn context_feature<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Class layout of the default world: four pairs of related classes.
const DEFAULT_CLASSES: [(&str, [&str; 3], bool); 8] = [
    ("det", ["a", "the", "one"], false),
    ("prep", ["on", "near", "by"], false),
    ("person", ["man", "woman", "kid"], true),
    ("animal", ["dog", "cat", "horse"], true),
    ("move", ["runs", "walks", "jumps"], false),
    ("rest", ["sits", "stands", "lies"], false),
    ("land", ["street", "park", "field"], true),
    ("water", ["beach", "lake", "river"], true),
];

/// `(weight, slot classes)`.
type TemplateSpec = (f64, &'static [&'static str]);

const DEFAULT_CONTEXTS: [(&str, &[TemplateSpec]); 3] = [
    (
        "person_on_land",
        &[
            (0.5, &["det", "person", "move", "prep", "det", "land"]),
            (0.5, &["person", "rest", "prep", "land"]),
        ],
    ),
    (
        "animal_by_water",
        &[
            (0.5, &["det", "animal", "move", "prep", "det", "water"]),
            (0.5, &["animal", "rest", "prep", "water"]),
        ],
    ),
    (
        "person_with_animal",
        &[
            (0.4, &["det", "person", "rest", "prep", "det", "animal"]),
            (0.3, &["animal", "move", "prep", "det", "land"]),
            (0.3, &["person", "move", "prep", "det", "water"]),
        ],
    ),
];

/// Offset of each member from its class centroid along the class direction.
const MEMBER_OFFSETS: [f64; 3] = [-MEMBER_RADIUS, 0.0, MEMBER_RADIUS];
/// Log-weight change per `MEMBER_RADIUS` of offset.
const WEIGHT_SLOPE: f64 = 0.25;
/// Spread of the two classes of a related pair around their shared axis.
const PAIR_SPREAD: f64 = 0.25;

/// The default desk-scale world: 3 contexts, 8 classes of 3 tokens (four
/// related pairs), max length 8, 8-dimensional embeddings and features.
///
/// Within a class the members lie on a line through the centroid and their
/// sampling weights grow log-linearly along it, so embedding distance between
/// synonyms tracks the gap in their log-probabilities. Related classes share
/// an axis and sit about 0.49 apart; unrelated classes are at least 1 apart
/// (before member offsets). Every template starts with a different class, so
/// the template is known after the first token.
pub fn default_world<R: Rng + ?Sized>(rng: &mut R) -> Result<GrammarWorld> {
    let dim = 8;
    let mut names = vec!["<bos>".to_string(), "<eos>".to_string()];
    let mut classes = Vec::new();
    for (name, members, object) in DEFAULT_CLASSES {
        let ids: Vec<usize> = members
            .iter()
            .map(|m| {
                names.push(m.to_string());
                names.len() - 1
            })
            .collect();
        let raw: Vec<f64> = MEMBER_OFFSETS
            .iter()
            .map(|o| (WEIGHT_SLOPE * o / MEMBER_RADIUS).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        classes.push(SynonymClass {
            name: name.to_string(),
            members: ids,
            weights: raw.into_iter().map(|w| w / total).collect(),
            object,
        });
    }

    let axes = spread_on_sphere(DEFAULT_CLASSES.len() / 2, dim, 1.0, rng)?;
    let mut emb = vec![vec![0.0; dim]; names.len()];
    for (pair, axis) in axes.iter().enumerate() {
        // random direction orthogonal to the axis
        let mut o = unit_vector(dim, rng);
        let proj: f64 = o.iter().zip(axis).map(|(a, b)| a * b).sum();
        o.iter_mut().zip(axis).for_each(|(x, a)| *x -= proj * a);
        let o = normalize(o);
        for (side, sign) in [(0, 1.0), (1, -1.0)] {
            let centroid = normalize(axis.iter().zip(&o).map(|(a, b)| a + sign * PAIR_SPREAD * b).collect());
            let dir = unit_vector(dim, rng);
            let class = &classes[2 * pair + side];
            for (&m, off) in class.members.iter().zip(MEMBER_OFFSETS) {
                emb[m] = centroid.iter().zip(&dir).map(|(c, d)| c + off * d).collect();
            }
        }
    }
    let vocab = Vocabulary::new(names, classes, emb)?;
    let (intra, inter) = vocab.class_separation();
    if intra >= inter {
        return Err(invalid(format!(
            "synonym classes overlap: max intra {intra:.3} >= min inter {inter:.3}"
        )));
    }

    let mut contexts = Vec::new();
    let mut templates = Vec::new();
    for (id, (name, defs)) in DEFAULT_CONTEXTS.iter().enumerate() {
        contexts.push(Context {
            id,
            name: name.to_string(),
            feature: context_feature(dim, rng),
        });
        templates.push(
            defs.iter()
                .map(|(w, slots)| Template {
                    weight: *w,
                    slots: slots
                        .iter()
                        .map(|s| Slot::Class(vocab.class_index(s).expect("default class")))
                        .collect(),
                })
                .collect(),
        );
    }
    GrammarWorld::new(vocab, contexts, templates, 8, 2.0)
}
