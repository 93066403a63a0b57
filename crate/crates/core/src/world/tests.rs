use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn world() -> GrammarWorld {
    GrammarWorld::default_with_seed(DEFAULT_WORLD_SEED).unwrap()
}

fn tiny(templates: &str) -> GrammarWorld {
    let json = format!(
        r#"{{"version": 1, "seed": 3, "max_length": 4,
            "classes": [
              {{"name": "x", "members": ["x1", "x2"], "object": true}},
              {{"name": "y", "members": ["y1"]}}
            ],
            "contexts": [{{"name": "c", "templates": {templates}}}]}}"#
    );
    WorldFile::from_json(&json).unwrap().build().unwrap()
}

#[test]
fn single_template_world_is_degenerate() {
    let w = tiny(r#"[{"weight": 1.0, "slots": ["x1", "y1"]}]"#);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x1 = w.vocab().id("x1").unwrap();
    let y1 = w.vocab().id("y1").unwrap();
    for _ in 0..20 {
        let (_, s) = w.sample_pair(&mut rng);
        assert_eq!(s.tokens, vec![x1, y1, EOS]);
    }
    assert_eq!(w.true_sentence_prob(0, &[x1, y1, EOS]).unwrap(), 1.0);
}

#[test]
fn zero_weight_template_never_drawn() {
    let w = tiny(r#"[{"weight": 1.0, "slots": ["x1"]}, {"weight": 0.0, "slots": ["y1"]}]"#);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x1 = w.vocab().id("x1").unwrap();
    for _ in 0..200 {
        assert_eq!(w.sample_sentence(0, &mut rng).tokens, vec![x1, EOS]);
    }
}

#[test]
fn balanced_templates_within_three_sigma() {
    let w = tiny(r#"[{"weight": 0.5, "slots": ["x1"]}, {"weight": 0.5, "slots": ["y1"]}]"#);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x1 = w.vocab().id("x1").unwrap();
    let n = 10_000;
    let hits = (0..n)
        .filter(|_| w.sample_sentence(0, &mut rng).tokens[0] == x1)
        .count() as f64;
    // binomial(n, 1/2): sd = sqrt(n)/2 = 50
    assert!((hits - 5000.0).abs() < 150.0, "hits = {hits}");
}

#[test]
fn synonym_slot_splits_probability() {
    let w = tiny(r#"[{"weight": 1.0, "slots": ["@x"]}]"#);
    let x1 = w.vocab().id("x1").unwrap();
    let x2 = w.vocab().id("x2").unwrap();
    let y1 = w.vocab().id("y1").unwrap();
    assert_eq!(w.true_sentence_prob(0, &[x1, EOS]).unwrap(), 0.5);
    assert_eq!(w.true_sentence_prob(0, &[x2, EOS]).unwrap(), 0.5);
    assert_eq!(w.true_sentence_prob(0, &[y1, EOS]).unwrap(), 0.0);
    assert!(w.true_sentence_prob(5, &[x1, EOS]).is_err());
}

#[test]
fn support_sums_to_one_per_context() {
    let w = world();
    for c in w.contexts() {
        let support = w.support(c.id, 100_000).unwrap();
        let total: f64 = support.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12, "context {} sums to {total}", c.id);
        for (s, p) in &support {
            assert!((w.true_sentence_prob(c.id, s).unwrap() - p).abs() < 1e-15);
        }
    }
    assert!(matches!(w.support(0, 10), Err(crate::Error::Unsupported(_))));
}

#[test]
fn samples_follow_true_distribution() {
    // Pearson chi-square over the support of context 1's short template
    // prefix classes: first-token frequencies against exact marginals.
    let w = world();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000;
    let dist = w.next_token_distribution(1, &[]).unwrap();
    let mut counts = vec![0usize; w.vocab().len()];
    for _ in 0..n {
        let s = w.sample_sentence(1, &mut rng);
        s.validate(&w).unwrap();
        counts[s.tokens[0]] += 1;
    }
    let chi2: f64 = dist
        .iter()
        .map(|&(t, p)| {
            let e = p * n as f64;
            (counts[t] as f64 - e).powi(2) / e
        })
        .sum();
    // 5 degrees of freedom, p = 0.01 critical value
    assert!(chi2 < 15.086, "chi2 = {chi2}");
}

#[test]
fn true_reward_rules() {
    let w = world();
    let v = w.vocab();
    let a = v.id("a").unwrap();
    let man = v.id("man").unwrap();
    let woman = v.id("woman").unwrap();
    // context 0 opens with det or person
    assert_eq!(w.true_token_reward(0, &[], man).unwrap(), 1.0);
    assert_eq!(w.true_token_reward(0, &[a], woman).unwrap(), 1.0);
    let dog = v.id("dog").unwrap();
    let r = w.true_token_reward(0, &[a], dog).unwrap();
    assert!((0.0..1.0).contains(&r));
    // an ungrammatical prefix has no valid continuation
    assert_eq!(w.true_token_reward(0, &[dog, dog], man).unwrap(), 0.0);
}

#[test]
fn wrong_class_reward_decreases_with_distance() {
    let w = world();
    let v = w.vocab();
    let prefix = [v.id("a").unwrap()];
    let valid = w.valid_continuations(0, &prefix).unwrap();
    let mut probes: Vec<(f64, f64)> = v
        .content_tokens()
        .filter(|t| !valid.contains(t))
        .map(|t| {
            let d = valid
                .iter()
                .map(|&u| v.embedding_distance(t, u).unwrap())
                .fold(f64::INFINITY, f64::min);
            (d, w.true_token_reward(0, &prefix, t).unwrap())
        })
        .collect();
    probes.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for pair in probes.windows(2) {
        assert!(pair[1].1 <= pair[0].1);
        assert!(pair[0].1 < 1.0);
    }
}

#[test]
fn embedding_distance_properties() {
    let w = world();
    let v = w.vocab();
    for a in 0..v.len() {
        assert_eq!(v.embedding_distance(a, a).unwrap(), 0.0);
        for b in 0..v.len() {
            let d = v.embedding_distance(a, b).unwrap();
            assert_eq!(d, v.embedding_distance(b, a).unwrap());
            if a != b && a > 1 && b > 1 {
                assert!(d > 0.0);
            }
        }
    }
    assert!(v.embedding_distance(0, 999).is_err());
    let (intra, inter) = v.class_separation();
    assert!(intra < inter, "intra {intra} inter {inter}");
}

#[test]
fn default_world_shape() {
    let w = world();
    assert_eq!(w.contexts().len(), 3);
    assert_eq!(w.vocab().len(), 26);
    assert_eq!(w.vocab().classes().len(), 8);
    assert_eq!(w.max_len(), 8);
    assert_eq!(w.context_dim(), 8);
    for c in w.contexts() {
        let firsts: Vec<_> = w
            .templates(c.id)
            .iter()
            .map(|t| t.slots[0])
            .collect();
        for (i, s) in firsts.iter().enumerate() {
            assert!(!firsts[..i].contains(s), "templates must diverge at the first slot");
        }
    }
}

#[test]
fn world_file_round_trip() {
    let w = world();
    let json = w.to_file().to_json().unwrap();
    let back = WorldFile::from_json(&json).unwrap().build().unwrap();
    assert_eq!(w, back);
}

#[test]
fn world_file_rejects_bad_documents() {
    assert!(matches!(
        WorldFile::from_json(r#"{"version": 9, "max_length": 3, "classes": [], "contexts": []}"#),
        Err(crate::Error::Version { .. })
    ));
    assert!(WorldFile::from_json(r#"{"version": 1, "bogus": 1}"#).is_err());
    let too_long = r#"{"version": 1, "max_length": 2,
        "classes": [{"name": "x", "members": ["x1"]}],
        "contexts": [{"name": "c", "templates": [{"weight": 1.0, "slots": ["x1", "x1"]}]}]}"#;
    assert!(WorldFile::from_json(too_long).unwrap().build().is_err());
}

#[test]
fn sample_validation_catches_bad_sequences() {
    let w = world();
    let ok = SequenceSample { context: 0, tokens: vec![2, EOS], source: SampleSource::GroundTruth };
    assert!(ok.validate(&w).is_ok());
    let bad = [
        vec![2, EOS, 2, EOS],
        vec![BOS, EOS],
        vec![2, 3],
        vec![],
        vec![2, 99],
    ];
    for tokens in bad {
        let s = SequenceSample { context: 0, tokens, source: SampleSource::GroundTruth };
        assert!(s.validate(&w).is_err());
    }
    let capped = SequenceSample { context: 0, tokens: vec![2; 8], source: SampleSource::Generated };
    assert!(capped.validate(&w).is_ok());
}
