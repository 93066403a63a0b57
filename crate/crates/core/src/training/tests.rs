use super::*;
use crate::losses::LossSpec;
use crate::models::ModelDims;
use crate::world::{WorldFile, EOS};

fn small_config(loss: LossSpec) -> TrainingConfig {
    TrainingConfig {
        loss,
        iterations: 20,
        batch_size: 4,
        eval_every: 5,
        embed_dim: 4,
        hidden_dim: 8,
        probe_batch: 12,
        seed: 3,
        ..Default::default()
    }
}

fn two_sentence_world() -> GrammarWorld {
    let json = r#"{"version": 1, "seed": 1, "max_length": 3, "context_dim": 1, "embedding_dim": 2,
        "classes": [{"name": "x", "members": ["a", "b"]}],
        "contexts": [{"name": "c", "feature": [0.0], "templates": [{"weight": 1.0, "slots": ["@x"]}]}]}"#;
    WorldFile::from_json(json).unwrap().build().unwrap()
}

/// After BOS the state is ≈ -1 and the policy emits a/b with 0.9/0.1; after
/// a or b the state is ≈ +1 and it emits EOS.
fn skewed_policy() -> PolicyNet {
    let dims = ModelDims {
        vocab_size: 4,
        embed_dim: 1,
        hidden_dim: 1,
        context_dim: 1,
    };
    let mut p = PolicyNet::zeros(dims);
    let params = p.params_mut();
    params.block_mut(0).as_mut_slice().copy_from_slice(&[0.0, 0.0, 1.0, 1.0]);
    params.block_mut(3).as_mut_slice()[0] = 20.0;
    params.block_mut(5).as_mut_slice()[0] = -10.0;
    params.block_mut(6).as_mut_slice().copy_from_slice(&[0.0, 40.0, -20.0, -20.0]);
    params
        .block_mut(7)
        .as_mut_slice()
        .copy_from_slice(&[-40.0, 0.0, 0.9f64.ln() - 20.0, 0.1f64.ln() - 20.0]);
    p
}

#[test]
fn kl_of_two_sentence_world() {
    let w = two_sentence_world();
    let p = skewed_policy();
    let kl = exact_policy_kl(&w, &p, 0, 100).unwrap();
    let want = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
    assert!((kl - want).abs() < 1e-6, "{kl} vs {want}");
    assert!((want - 0.5108).abs() < 1e-4);
}

#[test]
fn kl_matches_brute_force_sum() {
    let world = GrammarWorld::default_with_seed(7).unwrap();
    let cfg = small_config(LossSpec::rairl());
    let p = PolicyNet::new(cfg.dims(&world), &mut derive_rng(5, 0));
    for c in 0..world.contexts().len() {
        let ctx = world.context(c).unwrap();
        let brute: f64 = world
            .support(c, 100_000)
            .unwrap()
            .iter()
            .map(|(s, q)| q * (q.ln() - p.sequence_log_probs(ctx, s).unwrap().iter().sum::<f64>()))
            .sum();
        let kl = exact_policy_kl(&world, &p, c, 100_000).unwrap();
        assert!((kl - brute).abs() < 1e-9);
        assert!(kl > 0.0);
    }
    assert!(matches!(
        exact_policy_kl(&world, &p, 0, 10),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn config_validation_and_serde() {
    assert!(TrainingConfig::default().validate().is_ok());
    let bad = [
        TrainingConfig { iterations: 0, ..Default::default() },
        TrainingConfig { generator_lr: 0.0, ..Default::default() },
        TrainingConfig { discriminator_lr: -1.0, ..Default::default() },
        TrainingConfig { gamma: 0.0, ..Default::default() },
        TrainingConfig { gamma: 1.5, ..Default::default() },
        TrainingConfig { batch_size: 0, ..Default::default() },
    ];
    for c in bad {
        assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
    }
    let c = small_config(LossSpec::airl());
    let back: TrainingConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(back, c);
    assert!(serde_json::from_str::<TrainingConfig>(r#"{"iterationz": 3}"#).is_err());
}

#[test]
fn missing_world_file_names_path() {
    let c = TrainingConfig {
        world_file: Some("/nonexistent/world.json".into()),
        ..Default::default()
    };
    match c.load_world() {
        Err(Error::Config(m)) => assert!(m.contains("/nonexistent/world.json")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn eval_only_record_has_initial_point() {
    let world = GrammarWorld::default_with_seed(7).unwrap();
    let t = Trainer::new(small_config(LossSpec::rairl()), &world).unwrap();
    let before = t.policy().clone();
    assert_eq!(t.record().points.len(), 1);
    assert_eq!(t.record().points[0].iteration, 0);
    assert_eq!(t.record().points[0].disc_loss, 0.0);
    assert_eq!(t.policy(), &before);
}

#[test]
fn runs_are_deterministic() {
    let world = GrammarWorld::default_with_seed(7).unwrap();
    let a = train(small_config(LossSpec::rairl()), &world).unwrap();
    let b = train(small_config(LossSpec::rairl()), &world).unwrap();
    assert_eq!(a.record, b.record);
    assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
    let iters: Vec<usize> = a.record.points.iter().map(|p| p.iteration).collect();
    assert_eq!(iters, vec![0, 5, 10, 15, 20]);
    let mut csv_a = Vec::new();
    a.record.write_csv(&mut csv_a).unwrap();
    let mut csv_b = Vec::new();
    b.record.write_csv(&mut csv_b).unwrap();
    assert_eq!(csv_a, csv_b);
    let c = train(TrainingConfig { seed: 4, ..small_config(LossSpec::rairl()) }, &world).unwrap();
    assert_ne!(a.record, c.record);
}

#[test]
fn every_loss_kind_trains() {
    let world = GrammarWorld::default_with_seed(7).unwrap();
    for kind in [LossKind::Mle, LossKind::Rl, LossKind::Gan, LossKind::Airl, LossKind::Rairl] {
        let mut spec = LossSpec::of(kind);
        spec.mle_full_form = kind == LossKind::Mle;
        let run = train(small_config(spec), &world).unwrap();
        let last = run.record.last().unwrap();
        assert_eq!(last.iteration, 20);
        assert!(last.kl_mean.is_finite() && last.kl_mean > 0.0, "{kind}");
    }
}

#[test]
fn resume_reproduces_uninterrupted_run() {
    let world = GrammarWorld::default_with_seed(7).unwrap();
    let full = train(small_config(LossSpec::rairl()), &world).unwrap();

    let mut t = Trainer::new(small_config(LossSpec::rairl()), &world).unwrap();
    t.run_until(10, |_| {}).unwrap();
    let bytes = t.checkpoint().to_bytes().unwrap();
    drop(t);
    let ckpt = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(ckpt.iteration, 10);
    let mut resumed = Trainer::from_checkpoint(ckpt, &world).unwrap();
    resumed.run().unwrap();
    assert_eq!(resumed.record(), &full.record);
    assert_eq!(resumed.checkpoint().to_bytes().unwrap(), full.checkpoint.to_bytes().unwrap());
}

#[test]
fn pause_between_evaluation_points_resumes_exactly() {
    let world = GrammarWorld::default_with_seed(7).unwrap();
    let full = train(small_config(LossSpec::rairl()), &world).unwrap();

    let mut t = Trainer::new(small_config(LossSpec::rairl()), &world).unwrap();
    t.run_until(7, |_| {}).unwrap();
    assert_eq!(t.record().last().unwrap().iteration, 5);
    let ckpt = Checkpoint::from_bytes(&t.checkpoint().to_bytes().unwrap()).unwrap();
    let mut resumed = Trainer::from_checkpoint(ckpt, &world).unwrap();
    resumed.run().unwrap();
    assert_eq!(resumed.record(), &full.record);
    assert_eq!(resumed.checkpoint().to_bytes().unwrap(), full.checkpoint.to_bytes().unwrap());
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let world = GrammarWorld::default_with_seed(7).unwrap();
    let run = train(small_config(LossSpec::rairl()), &world).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("final.ckpt");
    save_checkpoint(&path, &run.checkpoint).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, run.checkpoint);
    assert_eq!(back.policy.flatten(), run.policy.params().flatten());

    let bytes = run.checkpoint.to_bytes().unwrap();
    assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
    for cut in [0, 10, 30, bytes.len() - 1] {
        assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
    }
    let mut wrong = bytes.clone();
    wrong[8..12].copy_from_slice(&7u32.to_le_bytes());
    assert!(matches!(
        Checkpoint::from_bytes(&wrong),
        Err(Error::Version { expected: 1, found: 7 })
    ));
    let mut magic = bytes;
    magic[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&magic), Err(Error::Format(_))));
}

#[test]
fn run_csv_round_trips_and_rejects_bad_headers() {
    let world = GrammarWorld::default_with_seed(7).unwrap();
    let run = train(small_config(LossSpec::rairl()), &world).unwrap();
    let mut buf = Vec::new();
    run.record.write_csv(&mut buf).unwrap();
    let back = RunRecord::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.points.len(), run.record.points.len());
    assert_eq!(back.context_names, run.record.context_names);
    for (a, b) in back.points.iter().zip(&run.record.points) {
        assert_eq!(a, b);
    }
    let text = String::from_utf8(buf).unwrap().replacen("mean_d", "mean_x", 1);
    assert!(RunRecord::read_csv(text.as_bytes()).is_err());
}

#[test]
fn zero_generator_gradient_at_equilibrium() {
    let world = GrammarWorld::default_with_seed(7).unwrap();
    let cfg = small_config(LossSpec::rairl());
    let dims = cfg.dims(&world);
    let policy = PolicyNet::zeros(dims);
    let mut disc = DiscriminatorNet::zeros(dims, cfg.gamma).unwrap();
    *disc.reward_bias_mut() = -(dims.vocab_size as f64).ln();
    let mut t = Trainer::with_players(cfg, &world, policy.clone(), disc).unwrap();
    let batch = t.sample_batch().unwrap();
    let (_, grads, _) = t.generator_gradient(&batch).unwrap();
    assert_eq!(grads.norm(), 0.0);
    let (_, norm, _) = t.generator_update(&batch).unwrap();
    assert_eq!(norm, 0.0);
    assert_eq!(t.policy(), &policy);
    // every probe token sits exactly on the decision boundary
    let p = t.evaluate().unwrap();
    assert_eq!(p.mean_d, 0.5);
    assert_eq!(p.std_d, 0.0);
}

#[test]
fn discriminator_loss_is_two_ln_two_per_token_at_half() {
    let world = GrammarWorld::default_with_seed(7).unwrap();
    let cfg = small_config(LossSpec::rairl());
    let dims = cfg.dims(&world);
    let mut disc = DiscriminatorNet::zeros(dims, 1.0).unwrap();
    *disc.reward_bias_mut() = -(dims.vocab_size as f64).ln();
    let mut t = Trainer::with_players(cfg, &world, PolicyNet::zeros(dims), disc).unwrap();
    let batch = vec![BatchItem {
        context: 0,
        truth: vec![2, 3, EOS],
        generated: vec![4, 5, EOS],
    }];
    let (loss, _) = t.discriminator_update(&batch).unwrap();
    assert!((loss - 3.0 * 2.0 * 2f64.ln()).abs() < 1e-12);
}

#[test]
fn numerical_blow_up_aborts_with_iteration() {
    let world = GrammarWorld::default_with_seed(7).unwrap();
    let cfg = TrainingConfig {
        generator_lr: 1e308,
        discriminator_lr: 1e308,
        ..small_config(LossSpec::rairl())
    };
    let mut t = Trainer::new(cfg, &world).unwrap();
    match t.run() {
        Err(Error::Numerical(m)) => assert!(m.starts_with("iteration "), "{m}"),
        other => panic!("expected a numerical abort, got {other:?}"),
    }
}
