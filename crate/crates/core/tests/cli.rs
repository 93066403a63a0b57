use std::fs;
use std::path::{Path, PathBuf};

use rairl::cli::*;
use rairl::evaluation::reports::*;
use rairl::evaluation::DiversityReport;
use rairl::models::{DiscriminatorNet, PolicyNet};
use rairl::numerics::derive_rng;
use rairl::training::{save_checkpoint, Trainer, CHECKPOINT_MAGIC};
use tempfile::TempDir;

fn small_config(dir: &Path) -> PathBuf {
    let mut cfg = ExperimentConfig::default();
    cfg.training.iterations = 40;
    cfg.training.eval_every = 20;
    cfg.training.batch_size = 4;
    cfg.training.embed_dim = 4;
    cfg.training.hidden_dim = 8;
    cfg.training.probe_batch = 12;
    cfg.evaluation.corpus_size = 40;
    cfg.evaluation.diversity_samples = 30;
    cfg.evaluation.recovery_probes = 50;
    cfg.evaluation.topk_samples = 20;
    cfg.dynamics.game.steps = 30;
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn rairl(args: &[&str]) -> i32 {
    run(std::iter::once("rairl").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_small(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let cfg = small_config(dir.path());
    let out = dir.path().join(name);
    let mut args = vec!["train", "--config", s(&cfg), "--out", s(&out)];
    args.extend_from_slice(extra);
    assert_eq!(rairl(&args), EXIT_OK);
    out
}

#[test]
fn train_writes_artifacts_deterministically() {
    let dir = TempDir::new().unwrap();
    let a = train_small(&dir, "a", &["--seed", "4"]);
    let b = train_small(&dir, "b", &["--seed", "4"]);
    for f in [RUN_CSV, FINAL_CHECKPOINT, CONFIG_ECHO] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let echo: ExperimentConfig = serde_json::from_str(&fs::read_to_string(a.join(CONFIG_ECHO)).unwrap()).unwrap();
    assert_eq!(echo.training.seed, 4);
    let c = train_small(&dir, "c", &["--seed", "5"]);
    assert_ne!(fs::read(a.join(RUN_CSV)).unwrap(), fs::read(c.join(RUN_CSV)).unwrap());
}

#[test]
fn config_errors_exit_with_config_code() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("o");
    let o = s(&out);
    let missing = dir.path().join("no-world.json");
    let set = format!("training.world_file={}", missing.display());
    assert_eq!(rairl(&["train", "--config", s(&cfg), "--out", o, "--set", &set]), EXIT_CONFIG);
    let loaded = ExperimentConfig::load(Some(&cfg), &[set]).unwrap();
    match cmd_train(&loaded, &out) {
        Err(rairl::Error::Config(m)) => assert!(m.contains("no-world.json"), "{m}"),
        other => panic!("{other:?}"),
    }
    assert_eq!(rairl(&["train", "--config", s(&cfg), "--out", o, "--set", "training.iterationz=3"]), EXIT_CONFIG);
    assert_eq!(rairl(&["train", "--config", s(&cfg), "--out", o, "--set", "training.batch_size=0"]), EXIT_CONFIG);
    assert_eq!(rairl(&["train", "--config", "/nonexistent.json", "--out", o]), EXIT_CONFIG);
    assert_eq!(rairl(&["train", "--out", o, "--set", "nonsense"]), EXIT_CONFIG);
    assert_eq!(rairl(&["frobnicate"]), EXIT_CONFIG);
    assert_eq!(rairl(&["--help"]), EXIT_OK);

    let no_version = dir.path().join("nv.json");
    fs::write(&no_version, r#"{"training": {"iterations": 5}}"#).unwrap();
    assert_eq!(rairl(&["train", "--config", s(&no_version), "--out", o]), EXIT_CONFIG);
    let future = dir.path().join("v2.json");
    fs::write(&future, r#"{"version": 2}"#).unwrap();
    assert_eq!(rairl(&["train", "--config", s(&future), "--out", o]), EXIT_VERSION);
}

#[test]
fn overrides_follow_dotted_paths() {
    let c = ExperimentConfig::load(
        None,
        &[
            "training.iterations=7".into(),
            "training.loss.kind=airl".into(),
            "training.loss.constant_term=false".into(),
            "ablation.rows.1.name=x".into(),
            "evaluation.reports=[\"kl\"]".into(),
        ],
    )
    .unwrap();
    assert_eq!(c.training.iterations, 7);
    assert_eq!(c.training.loss.kind, rairl::losses::LossKind::Airl);
    assert!(!c.training.loss.constant_term);
    assert_eq!(c.ablation.rows[1].name, "x");
    assert_eq!(c.evaluation.reports, vec![EvalKind::Kl]);
    assert!(ExperimentConfig::load(None, &["ablation.rows.99.name=x".into()]).is_err());
    assert!(ExperimentConfig::load(None, &["training.iterations.x=1".into()]).is_err());
}

#[test]
fn numerical_abort_exits_three_with_diagnostic_record() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("boom");
    let code = rairl(&[
        "train",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--set",
        "training.generator_lr=1e308",
        "--set",
        "training.discriminator_lr=1e308",
    ]);
    assert_eq!(code, EXIT_NUMERIC);
    let rec: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(NUMERIC_ABORT)).unwrap()).unwrap();
    assert!(rec["message"].as_str().unwrap().contains("iteration"));
    assert!(out.join(RUN_CSV).exists());
    assert!(!out.join(FINAL_CHECKPOINT).exists());
}

#[test]
fn eval_reports_and_their_contracts() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let out = train_small(&dir, "t", &[]);
    let ckpt = out.join(FINAL_CHECKPOINT);
    let ev = dir.path().join("ev");
    assert_eq!(rairl(&["eval", "--config", s(&cfg), "--checkpoint", s(&ckpt), "--out", s(&ev)]), EXIT_OK);
    for k in EvalKind::ALL {
        assert!(ev.join(format!("{}.csv", k.name())).exists());
        assert!(ev.join(format!("{}.json", k.name())).exists());
    }
    let first = fs::read(ev.join("compactness.csv")).unwrap();
    assert_eq!(rairl(&["eval", "--config", s(&cfg), "--checkpoint", s(&ckpt), "--out", s(&ev)]), EXIT_OK);
    assert_eq!(fs::read(ev.join("compactness.csv")).unwrap(), first);

    // the reference corpus evaluated against itself has nothing novel
    let same = dir.path().join("same");
    let args = [
        "eval", "--config", s(&cfg), "--checkpoint", s(&ckpt), "--out", s(&same), "--which", "diversity", "--set",
        "evaluation.diversity_source=reference",
    ];
    assert_eq!(rairl(&args), EXIT_OK);
    let d: DiversityReport = read_json(&fs::read_to_string(same.join("diversity.json")).unwrap(), "diversity").unwrap();
    assert_eq!(d.novel_ratio, 0.0);
    assert_eq!(d.coverage, 1.0);
    assert!(!same.join("kl.csv").exists());
}

#[test]
fn training_lowers_kl_from_the_seed_init() {
    let dir = TempDir::new().unwrap();
    let cfg = ExperimentConfig::load(
        Some(&small_config(dir.path())),
        &["training.iterations=300".into(), "training.eval_every=300".into(), "training.generator_lr=0.01".into()],
    )
    .unwrap();
    let world = cfg.training.load_world().unwrap();
    let fresh = Trainer::new(cfg.training.clone(), &world).unwrap();
    let untrained = dir.path().join("untrained.ckpt");
    save_checkpoint(&untrained, &fresh.checkpoint()).unwrap();
    let out = dir.path().join("trained");
    let trained = cmd_train(&cfg, &out).unwrap().checkpoint;
    let kl = |ck: &Path, name: &str| {
        cmd_eval(&cfg, ck, &[EvalKind::Kl], 0, &dir.path().join(name)).unwrap().kl.unwrap().kl_mean
    };
    let (before, after) = (kl(&untrained, "k0"), kl(&trained, "k1"));
    assert!(after < before, "{after} vs {before}");
}

#[test]
fn constant_rewards_give_degenerate_compactness_warnings() {
    let dir = TempDir::new().unwrap();
    let cfg = ExperimentConfig::load(Some(&small_config(dir.path())), &[]).unwrap();
    let world = cfg.training.load_world().unwrap();
    let dims = cfg.training.dims(&world);
    let fresh = Trainer::with_players(
        cfg.training.clone(),
        &world,
        PolicyNet::zeros(dims),
        DiscriminatorNet::zeros(dims, cfg.training.gamma).unwrap(),
    )
    .unwrap();
    let ckpt = dir.path().join("zero.ckpt");
    save_checkpoint(&ckpt, &fresh.checkpoint()).unwrap();
    let out = dir.path().join("c");
    let ev = cmd_eval(&cfg, &ckpt, &[EvalKind::Compactness], 0, &out).unwrap();
    let c = ev.compactness.unwrap();
    assert!(c.same_class.is_none() && c.different_class.is_none());
    assert_eq!(c.warnings.len(), 2);
    let back: CompactnessSummary = read_json(&fs::read_to_string(out.join("compactness.json")).unwrap(), "compactness").unwrap();
    assert_eq!(back, c);
}

#[test]
fn checkpoint_version_mismatch_exits_four() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let out = train_small(&dir, "t", &[]);
    let mut bytes = fs::read(out.join(FINAL_CHECKPOINT)).unwrap();
    let at = CHECKPOINT_MAGIC.len();
    bytes[at..at + 4].copy_from_slice(&99u32.to_le_bytes());
    let bad = dir.path().join("future.ckpt");
    fs::write(&bad, bytes).unwrap();
    let ev = dir.path().join("ev");
    assert_eq!(rairl(&["eval", "--config", s(&cfg), "--checkpoint", s(&bad), "--out", s(&ev)]), EXIT_VERSION);
    let input = dir.path().join("in.tsv");
    fs::write(&input, "").unwrap();
    let args = ["diagnose", "--config", s(&cfg), "--checkpoint", s(&bad), "--input", s(&input), "--out", s(&ev)];
    assert_eq!(rairl(&args), EXIT_VERSION);
}

#[test]
fn diagnose_input_handling() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let out = train_small(&dir, "t", &[]);
    let ckpt = out.join(FINAL_CHECKPOINT);
    let world = ExperimentConfig::load(Some(&cfg), &[]).unwrap().training.load_world().unwrap();
    let ctx = world.contexts()[0].name.clone();
    let eos = world.vocab().name(world.vocab().eos()).to_string();
    let diag = |input: &str, name: &str| {
        let path = dir.path().join(format!("{name}.tsv"));
        fs::write(&path, input).unwrap();
        let o = dir.path().join(name);
        let code = rairl(&["diagnose", "--config", s(&cfg), "--checkpoint", s(&ckpt), "--input", s(&path), "--out", s(&o)]);
        (code, o)
    };

    let (code, o) = diag("", "empty");
    assert_eq!(code, EXIT_OK);
    let csv = fs::read_to_string(o.join("diagnosis.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert_eq!(csv.trim_end(), DiagnosisRow::HEADER.join(","));

    let (code, o) = diag(&format!("# one token\n{ctx}\t{eos}\n"), "single");
    assert_eq!(code, EXIT_OK);
    let rows: Vec<DiagnosisRow> = read_csv(fs::File::open(o.join("diagnosis.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].flagged, None);

    let good = format_diagnosis_input(&world, &injected_corpus(&world, 2, &mut derive_rng(1, 0)));
    let bad = format!("{good}{ctx}\tflurb {eos}\n");
    let path = dir.path().join("bad.tsv");
    fs::write(&path, &bad).unwrap();
    match parse_diagnosis_input(&world, &bad) {
        Err(rairl::Error::Config(m)) => assert!(m.starts_with("line 3:") && m.contains("flurb"), "{m}"),
        other => panic!("{other:?}"),
    }
    assert_eq!(diag(&bad, "bad").0, EXIT_CONFIG);
    assert_eq!(diag(&format!("nowhere\t{eos}\n"), "ctx").0, EXIT_CONFIG);

    let (code, o) = diag(&good, "good");
    assert_eq!(code, EXIT_OK);
    let summary: DiagnosisSummary = read_json(&fs::read_to_string(o.join("diagnosis.json")).unwrap(), "diagnosis").unwrap();
    assert_eq!(summary.sequences, 2);
}

#[test]
fn dynamics_contracts() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let o = dir.path().join("zero");
    assert_eq!(rairl(&["dynamics", "--config", s(&cfg), "--out", s(&o), "--set", "dynamics.game.steps=0"]), EXIT_OK);
    for f in ["vanilla.csv", "refined.csv"] {
        assert_eq!(read_game_csv(fs::File::open(o.join(f)).unwrap()).unwrap().len(), 1);
    }

    let o = dir.path().join("eq");
    let args = ["dynamics", "--config", s(&cfg), "--out", s(&o), "--set", "dynamics.init=equilibrium"];
    assert_eq!(rairl(&args), EXIT_OK);
    let rows = read_game_csv(fs::File::open(o.join("refined.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 31);
    for r in &rows {
        for (a, b) in r[1..].iter().zip(&rows[0][1..]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let first = fs::read(o.join("vanilla.csv")).unwrap();
    assert_eq!(rairl(&args), EXIT_OK);
    assert_eq!(fs::read(o.join("vanilla.csv")).unwrap(), first);
    let bad = ["dynamics", "--config", s(&cfg), "--out", s(&o), "--set", "dynamics.p_true=[0.5,0.6]"];
    assert_eq!(rairl(&bad), EXIT_CONFIG);
}

#[test]
fn one_row_ablation_matches_train_then_eval() {
    let dir = TempDir::new().unwrap();
    let cfg_path = small_config(dir.path());
    let cfg = ExperimentConfig::load(Some(&cfg_path), &["ablation.rows=[{\"name\":\"solo\",\"loss\":{\"kind\":\"rairl\"}}]".into()])
        .unwrap();
    let abl = dir.path().join("abl");
    let table = cmd_ablate(&cfg, &abl).unwrap();
    assert_eq!(table.len(), 1);
    assert_eq!(table[0].status, "ok");

    let t = dir.path().join("t");
    let trained = cmd_train(&cfg, &t).unwrap();
    cmd_eval(&cfg, &trained.checkpoint, &cfg.evaluation.reports, cfg.training.seed, &t).unwrap();
    let mut names: Vec<_> = fs::read_dir(&t).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 10);
    for n in names {
        assert_eq!(fs::read(t.join(&n)).unwrap(), fs::read(abl.join("solo").join(&n)).unwrap(), "{n:?}");
    }
    let back: Vec<AblationRowReport> = read_csv(fs::File::open(abl.join(ABLATION_CSV)).unwrap()).unwrap();
    assert_eq!(back, table);
}

#[test]
fn ablation_rejects_duplicates_and_marks_failures() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let o = dir.path().join("a");
    let dup = "ablation.rows=[{\"name\":\"x\",\"loss\":{\"kind\":\"mle\"}},{\"name\":\"x\",\"loss\":{\"kind\":\"rl\"}}]";
    assert_eq!(rairl(&["ablate", "--config", s(&cfg), "--out", s(&o), "--set", dup]), EXIT_CONFIG);

    let c = ExperimentConfig::load(
        Some(&cfg),
        &[
            "ablation.rows=[{\"name\":\"a\",\"loss\":{\"kind\":\"mle\"}},{\"name\":\"b\",\"loss\":{\"kind\":\"airl\"}}]".into(),
            "training.generator_lr=1e308".into(),
            "training.discriminator_lr=1e308".into(),
        ],
    )
    .unwrap();
    let table = cmd_ablate(&c, &o).unwrap();
    assert_eq!(table.len(), 2);
    assert!(table.iter().all(|r| r.status.starts_with("failed:")));
    let back: Vec<AblationRowReport> = read_csv(fs::File::open(o.join(ABLATION_CSV)).unwrap()).unwrap();
    assert_eq!(back.len(), 2);
}
