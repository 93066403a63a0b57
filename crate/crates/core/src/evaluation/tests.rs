use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::reports::*;
use super::*;
use crate::error::Error;
use crate::models::{DiscriminatorNet, ModelDims, PolicyNet};
use crate::world::{GrammarWorld, SampleSource, SequenceSample, EOS};

fn world() -> GrammarWorld {
    GrammarWorld::default_with_seed(7).unwrap()
}

// Definition-level oracles.

fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    let sx = (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n).sqrt();
    let sy = (y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n).sqrt();
    cov / (sx * sy)
}

fn brute_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let less = x.iter().filter(|w| *w < v).count() as f64;
            let equal = x.iter().filter(|w| *w == v).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

fn brute_kendall(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let sgn = |v: f64| (v > 0.0) as i32 as f64 - (v < 0.0) as i32 as f64;
    let (mut s, mut tx, mut ty) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            s += sgn(x[i] - x[j]) * sgn(y[i] - y[j]);
            tx += (x[i] == x[j]) as i32 as f64;
            ty += (y[i] == y[j]) as i32 as f64;
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    s / ((n0 - tx) * (n0 - ty)).sqrt()
}

#[test]
fn correlation_reference_values() {
    let c = correlations(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
    for v in [c.pearson, c.spearman, c.kendall] {
        assert!((v - 1.0).abs() < 1e-12, "{c:?}");
    }
    let c = correlations(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap();
    for v in [c.pearson, c.spearman, c.kendall] {
        assert!((v + 1.0).abs() < 1e-12, "{c:?}");
    }
    let k = kendall(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
    assert!((k - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn correlation_errors() {
    for f in [pearson, spearman, kendall] {
        assert!(matches!(f(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::DegenerateInput(_))));
        assert!(matches!(f(&[1.0], &[1.0]), Err(Error::InvalidInput(_))));
        assert!(matches!(f(&[1.0, 2.0], &[1.0]), Err(Error::InvalidInput(_))));
    }
}

#[test]
fn ranks_average_ties() {
    assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
}

fn sample_pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    // Small integer grids produce plenty of ties.
    (2usize..50).prop_flat_map(|n| {
        (
            prop::collection::vec((-5i32..5).prop_map(f64::from), n),
            prop::collection::vec(-10.0f64..10.0, n),
        )
    })
}

proptest! {
    #[test]
    fn correlations_agree_with_definitions((x, y) in sample_pairs()) {
        let xs_var = x.iter().any(|v| *v != x[0]);
        prop_assume!(xs_var);
        let p = pearson(&x, &y).unwrap();
        prop_assert!((p - brute_pearson(&x, &y)).abs() < 1e-10);
        let s = spearman(&x, &y).unwrap();
        prop_assert!((s - brute_pearson(&brute_ranks(&x), &brute_ranks(&y))).abs() < 1e-10);
        let k = kendall(&x, &y).unwrap();
        prop_assert!((k - brute_kendall(&x, &y)).abs() < 1e-10);
        for v in [p, s, k] {
            prop_assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn diversity_invariant_under_reordering(seed in 0u64..1000) {
        let w = world();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen: Vec<Vec<usize>> = (0..30).map(|_| w.sample_pair(&mut rng).1.tokens).collect();
        let train: Vec<Vec<usize>> = (0..30).map(|_| w.sample_pair(&mut rng).1.tokens).collect();
        let a = diversity_metrics(&gen, &train, &train).unwrap();
        let (mut g2, mut t2) = (gen.clone(), train.clone());
        g2.shuffle(&mut rng);
        t2.shuffle(&mut rng);
        prop_assert_eq!(a, diversity_metrics(&g2, &t2, &t2).unwrap());
    }
}

#[test]
fn diversity_reference_values() {
    let (a, b, c, d) = (2, 3, 4, 5);
    let refs = vec![vec![a, b, EOS], vec![c, d, EOS]];
    let gen = vec![vec![a, EOS], vec![b, a, EOS]];
    let r = diversity_metrics(&gen, &refs, &refs).unwrap();
    assert_eq!(r.coverage, 0.5);
    assert_eq!(r.novel_ratio, 1.0);
    assert_eq!(r.distinct, 2);

    let r = diversity_metrics(&refs, &refs, &refs).unwrap();
    assert_eq!(r.novel_ratio, 0.0);

    let gen = vec![vec![a, b, EOS], vec![a, EOS], vec![b, EOS], vec![c, EOS]];
    let r = diversity_metrics(&gen, &refs, &refs).unwrap();
    assert_eq!(r.novel_ratio, 0.75);
    assert!(diversity_metrics::<Vec<usize>, _, _>(&[], &refs, &refs).is_err());
}

#[test]
fn drop_rule_arithmetic() {
    let (flag, rates) = flag_position(&[0.8, 0.9, 0.3, 0.2], 0.5, None);
    assert_eq!(flag, Some(2));
    assert!((rates[2] - 0.6 / 0.9).abs() < 1e-15);
    assert_eq!(rates[0], 0.0);
    assert_eq!(flag_position(&[0.1, 0.2, 0.2, 0.9], 0.5, None).0, None);
    // threshold above every observed drop
    let r = [1.0, 0.7, 0.4, 0.3];
    let (_, rates) = flag_position(&r, 0.5, None);
    let max = rates.iter().cloned().fold(f64::MIN, f64::max);
    assert_eq!(flag_position(&r, max + 1e-9, None).0, None);
}

#[test]
fn drop_rule_guard_near_zero() {
    // relative rule undefined at r = 0; raw drop 0.6 over scale 1.0
    let (flag, rates) = flag_position(&[0.0, -0.6], 0.5, Some(1.0));
    assert_eq!(flag, Some(1));
    assert!((rates[1] - 0.6).abs() < 1e-15);
    assert_eq!(flag_position(&[0.0, -0.4], 0.5, Some(1.0)).0, None);
}

fn players(seed: u64, w: &GrammarWorld) -> (PolicyNet, DiscriminatorNet) {
    let dims = ModelDims {
        vocab_size: w.vocab().len(),
        embed_dim: 4,
        hidden_dim: 6,
        context_dim: w.context_dim(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = PolicyNet::new(dims, &mut rng);
    let mut d = DiscriminatorNet::new(dims, 1.0, &mut rng).unwrap();
    for i in 0..d.params().total_dim() {
        let v = d.params().get_flat(i) * 20.0;
        d.params_mut().set_flat(i, v);
    }
    (p, d)
}

#[test]
fn diagnosis_invariants_hold() {
    let w = world();
    let (p, d) = players(1, &w);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut flagged = 0;
    for _ in 0..40 {
        let (ctx, s) = w.sample_pair(&mut rng);
        let refs = vec![s.tokens.clone()];
        let (bad, _) = inject_wrong_token(w.vocab(), &s.tokens, &mut rng).unwrap();
        for signal in [DropSignal::Density, DropSignal::F, DropSignal::G] {
            let opts = DiagnosisOptions { signal, ..Default::default() };
            let r = diagnose_and_rewrite(&d, &p, ctx, &bad, &refs, w.max_len(), opts, &mut rng).unwrap();
            assert_eq!(r.rewards.len(), bad.len());
            if let Some(t) = r.flagged {
                flagged += 1;
                assert!(t >= 1 && t < bad.len());
                assert!(r.drop_rates[t] > opts.threshold);
                let rw = r.rewrite.as_ref().unwrap();
                assert_eq!(&rw[..t], &bad[..t]);
                let rp = r.random_position.unwrap();
                assert!(rp >= 1 && rp < bad.len());
                assert_eq!(&r.random_rewrite.as_ref().unwrap()[..rp], &bad[..rp]);
                if rp == t {
                    assert_eq!(r.rewrite, r.random_rewrite);
                }
            } else {
                assert!(r.rewrite.is_none() && r.improvement().is_none());
            }
        }
    }
    assert!(flagged > 0);
}

#[test]
fn single_token_sequence_is_never_flagged() {
    let w = world();
    let (p, d) = players(3, &w);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = diagnose_and_rewrite(&d, &p, &w.contexts()[0], &[EOS], &[], w.max_len(), Default::default(), &mut rng)
        .unwrap();
    assert_eq!(r.flagged, None);
}

#[test]
fn injection_changes_class_inside_sentence() {
    let w = world();
    let v = w.vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let s = w.sample_pair(&mut rng).1.tokens;
        let (bad, pos) = inject_wrong_token(v, &s, &mut rng).unwrap();
        assert!(pos >= 1 && pos + 1 < s.len());
        assert_ne!(v.class_of(bad[pos]), v.class_of(s[pos]));
        assert!(bad.iter().zip(&s).enumerate().all(|(k, (a, b))| k == pos || a == b));
        assert_eq!(w.true_sentence_prob(0, &bad).unwrap(), 0.0);
    }
    assert_eq!(inject_wrong_token(v, &[2, EOS], &mut rng), None);
}

fn corpus_of(tokens: Vec<usize>, copies: usize) -> Vec<SequenceSample> {
    (0..copies)
        .map(|_| SequenceSample {
            context: 0,
            tokens: tokens.clone(),
            source: SampleSource::Generated,
        })
        .collect()
}

#[test]
fn rigged_scorer_gives_perfect_compactness() {
    let w = world();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = w.sample_sentence(0, &mut rng).tokens;
    let corpus = corpus_of(base.clone(), 60);
    let vocab = w.vocab();
    for target in [ProbeTarget::FirstObject, ProbeTarget::FirstContent] {
        let report = compactness_with(
            &w,
            &corpus,
            target,
            |_, t| {
                Ok(t.iter()
                    .zip(&base)
                    .map(|(&a, &b)| vocab.embedding_distance(a, b).unwrap())
                    .sum())
            },
            &mut rng,
        )
        .unwrap();
        for p in &report.probes {
            assert_ne!(p.original, p.replacement);
            assert!(p.distance > 0.0);
            assert!((p.delta - p.distance).abs() < 1e-12);
        }
        assert!((report.rp_same().unwrap() - 1.0).abs() < 1e-12);
        assert!((report.rp_different().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn compactness_reports_degenerate_inputs() {
    let w = world();
    let (_, d) = players(6, &w);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let empty = corpus_of(vec![EOS], 5);
    assert!(matches!(
        compactness_probe(&w, &d, &empty, Default::default(), &mut rng),
        Err(Error::DegenerateInput(_))
    ));
    // a constant scorer has zero variance in both buckets
    let corpus = corpus_of(w.sample_sentence(1, &mut rng).tokens, 10);
    let r = compactness_with(&w, &corpus, ProbeTarget::FirstObject, |_, _| Ok(1.0), &mut rng).unwrap();
    assert!(r.same_class.is_none() && r.different_class.is_none());
    assert_eq!(r.warnings.len(), 2);
}

#[test]
fn refined_game_is_stationary_at_equilibrium() {
    let p = [0.5, 0.25, 0.15, 0.10];
    let init = GameState::equilibrium(&p).unwrap();
    let (_, gz) = game_gradients(&p, &init, GameVariant::Refined).unwrap();
    assert!(gz.iter().all(|&g| g == 0.0));
    let t = one_step_game(&p, &init, GameVariant::Refined, GameConfig::default()).unwrap();
    assert_eq!(t.rows.len(), 2001);
    assert_eq!(t.rows[0].gen_grad_norm, 0.0);
    for r in &t.rows {
        assert!(r.pi.iter().zip(p).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(r.d.iter().all(|d| (d - 0.5).abs() < 1e-12));
    }
}

#[test]
fn vanilla_game_gradient_at_equilibrium_is_score_sum() {
    let p = [0.5, 0.25, 0.15, 0.10];
    let init = GameState::equilibrium(&p).unwrap();
    let (_, gz) = game_gradients(&p, &init, GameVariant::Vanilla).unwrap();
    // Σ_w ∇ log π(w) = Σ_w (e_w - π) = 1 - K·π
    for (g, pj) in gz.iter().zip(p) {
        assert!((g - (1.0 - 4.0 * pj)).abs() < 1e-12, "{gz:?}");
    }
    let t = one_step_game(&p, &init, GameVariant::Vanilla, GameConfig { steps: 0, ..Default::default() }).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert!(t.rows[0].gen_grad_norm > 0.0);
    // uniform truth: the score sum vanishes
    let u = [0.25; 4];
    let (_, gz) = game_gradients(&u, &GameState::equilibrium(&u).unwrap(), GameVariant::Vanilla).unwrap();
    assert!(gz.iter().all(|g| g.abs() < 1e-12));
}

#[test]
fn refined_game_settles_where_vanilla_does_not() {
    let p = [0.5, 0.25, 0.15, 0.10];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..3 {
        let init = GameState::random(4, &mut rng);
        let cfg = GameConfig::default();
        let r = one_step_game(&p, &init, GameVariant::Refined, cfg).unwrap();
        let v = one_step_game(&p, &init, GameVariant::Vanilla, cfg).unwrap();
        assert!(r.window_std_d(0.1) < v.window_std_d(0.1));
        assert!(r.window_mean_abs_dev(0.1) < v.window_mean_abs_dev(0.1));
        assert!(r.window_mean_abs_dev(0.1) < 0.01);
    }
}

#[test]
fn game_rejects_bad_inputs() {
    let init = GameState::equilibrium(&[0.5, 0.5]).unwrap();
    assert!(one_step_game(&[0.5, 0.6], &init, GameVariant::Refined, GameConfig::default()).is_err());
    assert!(one_step_game(&[0.2; 5], &init, GameVariant::Refined, GameConfig::default()).is_err());
    assert!(one_step_game(&[1.0 / 3.0; 3], &init, GameVariant::Refined, GameConfig::default()).is_err());
}

#[test]
fn top_k_is_ranked_and_deduplicated() {
    let w = world();
    let (p, d) = players(7, &w);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ctx = &w.contexts()[0];
    let top = top_k_by_reward(&p, &d, ctx, 5, 40, w.max_len(), SentenceScorer::SumF, &mut rng).unwrap();
    assert_eq!(top.ranked.len(), 5);
    assert!(!top.shortfall);
    assert!(top.ranked.windows(2).all(|x| x[0].score >= x[1].score));
    let mut seen: Vec<_> = top.ranked.iter().map(|r| r.tokens.clone()).collect();
    seen.dedup();
    assert_eq!(seen.len(), 5);
    assert!(top_k_by_reward(&p, &d, ctx, 5, 4, w.max_len(), SentenceScorer::SumF, &mut rng).is_err());

    let mut det = PolicyNet::zeros(p.dims());
    det.output_bias_mut().as_mut_slice()[EOS] = 100.0;
    let top = top_k_by_reward(&det, &d, ctx, 1, 10, w.max_len(), SentenceScorer::SumG, &mut rng).unwrap();
    assert_eq!(top.ranked[0].tokens, vec![EOS]);
    let top = top_k_by_reward(&det, &d, ctx, 3, 10, w.max_len(), SentenceScorer::SumF, &mut rng).unwrap();
    assert!(top.shortfall);
    assert_eq!(top.ranked.len(), 1);
}

#[test]
fn reports_round_trip_through_their_schemas() {
    let w = world();
    let v = w.vocab();
    let s = w.sample_sentence(0, &mut ChaCha8Rng::seed_from_u64(1)).tokens;
    assert_eq!(parse_tokens(v, &render(v, &s)).unwrap(), s);
    assert!(parse_tokens(v, "dog flurb").is_err());

    let rows = vec![DiagnosisRow {
        index: 0,
        context: "c".into(),
        sequence: render(v, &s),
        flagged: None,
        rewrite: String::new(),
        random_position: Some(2),
        random_rewrite: render(v, &s),
        metric_original: 0.5,
        metric_rewrite: None,
        metric_random: Some(0.25),
        delta_vs_random: None,
    }];
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows).unwrap();
    assert_eq!(read_csv::<DiagnosisRow, _>(buf.as_slice()).unwrap(), rows);

    let mut empty = Vec::new();
    write_csv::<DiagnosisRow, _>(&mut empty, &[]).unwrap();
    assert_eq!(String::from_utf8(empty.clone()).unwrap().lines().count(), 1);
    assert!(read_csv::<DiagnosisRow, _>(empty.as_slice()).unwrap().is_empty());
    assert!(read_csv::<KlRow, _>(buf.as_slice()).is_err());

    let rows = vec![
        CompactnessRow {
            sentence: 1,
            context: "c".into(),
            position: 2,
            original: "dog".into(),
            replacement: "cat".into(),
            delta: 0.1,
            distance: 0.2,
            same_class: true,
        },
    ];
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows).unwrap();
    assert_eq!(read_csv::<CompactnessRow, _>(buf.as_slice()).unwrap(), rows);

    let summary = KlSummary { kl_mean: 0.1, kl_max: 0.2 };
    let mut buf = Vec::new();
    write_json(&mut buf, "kl", &summary).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(read_json::<KlSummary>(&text, "kl").unwrap(), summary);
    assert!(read_json::<KlSummary>(&text, "topk").is_err());
    assert!(matches!(
        read_json::<KlSummary>(&text.replace("\"version\": 1", "\"version\": 2"), "kl"),
        Err(Error::Version { .. })
    ));
    assert!(read_json::<KlSummary>(&text.replace("kl_max", "kl_other"), "kl").is_err());

    let t = one_step_game(&[0.6, 0.4], &GameState::equilibrium(&[0.6, 0.4]).unwrap(), GameVariant::Vanilla, GameConfig {
        steps: 5,
        ..Default::default()
    })
    .unwrap();
    let mut buf = Vec::new();
    write_game_csv(&mut buf, &t).unwrap();
    let rows = read_game_csv(buf.as_slice()).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0].len(), 3 * 2 + 3);
    let s = GameSummary::of(&t);
    let mut buf = Vec::new();
    write_json(&mut buf, "dynamics", &s).unwrap();
    assert_eq!(read_json::<GameSummary>(std::str::from_utf8(&buf).unwrap(), "dynamics").unwrap(), s);
}
