use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;

use super::config::{DiversitySource, EvalKind, ExperimentConfig, GameInit, OutputSettings};
use crate::error::{Error, Result};
use crate::evaluation::reports::*;
use crate::evaluation::{
    compactness_probe, diagnose_and_rewrite, diversity_metrics, inject_wrong_token, one_step_game, reward_recovery,
    top_k_by_reward, DiversityReport, GameState, GameVariant,
};
use crate::models::{DiscriminatorNet, PolicyNet};
use crate::numerics::derive_rng;
use crate::training::{load_checkpoint, policy_kl_by_context, save_checkpoint, RunRecord, Trainer};
use crate::world::{GrammarWorld, SequenceSample, TokenId};

pub const RUN_CSV: &str = "run.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const CONFIG_ECHO: &str = "config-echo.json";
pub const NUMERIC_ABORT: &str = "numeric-abort.json";
pub const ABLATION_CSV: &str = "ablation.csv";

// Evaluation streams sit above the training (0, 1) and probe (2^32 + i) streams.
const EVAL_STREAM: u64 = 2 << 32;
const CORPUS_STREAM: u64 = 3 << 32;
const DYNAMICS_STREAM: u64 = 4 << 32;

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_report<T: CsvRow, S: Serialize>(
    out: &Path,
    settings: &OutputSettings,
    name: &str,
    rows: &[T],
    summary: &S,
) -> Result<()> {
    if settings.csv {
        write_csv(create(&out.join(format!("{name}.csv")))?, rows)?;
    }
    if settings.json {
        write_json(create(&out.join(format!("{name}.json")))?, name, summary)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct AbortRecord<'a> {
    iteration: usize,
    message: String,
    run_csv: &'a str,
    last_eval: Option<&'a crate::training::EvalPoint>,
}

/// Outcome of [`cmd_train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub record: RunRecord,
    pub checkpoint: PathBuf,
}

/// Trains with `cfg.training` and writes `run.csv`, `final.ckpt` and
/// `config-echo.json` into `out`. A numerical failure writes the partial
/// run and a diagnostic record, then returns the error naming that record.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainOutcome> {
    let world = cfg.training.load_world()?;
    ensure_dir(out)?;
    let mut echo = serde_json::to_string_pretty(cfg)?;
    echo.push('\n');
    fs::write(out.join(CONFIG_ECHO), echo)?;
    let mut trainer = Trainer::new(cfg.training.clone(), &world)?;
    if let Err(e) = trainer.run() {
        trainer.record().write_csv(create(&out.join(RUN_CSV))?)?;
        if let Error::Numerical(msg) = &e {
            let path = out.join(NUMERIC_ABORT);
            let rec = AbortRecord {
                iteration: trainer.iteration(),
                message: msg.clone(),
                run_csv: RUN_CSV,
                last_eval: trainer.record().last(),
            };
            let mut text = serde_json::to_string_pretty(&rec)?;
            text.push('\n');
            fs::write(&path, text)?;
            return Err(Error::Numerical(format!("{msg}; diagnostic record: {}", path.display())));
        }
        return Err(e);
    }
    let ckpt_path = out.join(FINAL_CHECKPOINT);
    save_checkpoint(&ckpt_path, &trainer.checkpoint())?;
    trainer.record().write_csv(create(&out.join(RUN_CSV))?)?;
    Ok(TrainOutcome {
        record: trainer.record().clone(),
        checkpoint: ckpt_path,
    })
}

/// Summaries of the reports written by [`cmd_eval`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalOutcome {
    pub compactness: Option<CompactnessSummary>,
    pub diversity: Option<DiversityReport>,
    pub topk: Option<TopKSummary>,
    pub kl: Option<KlSummary>,
    pub recovery: Option<RecoverySummary>,
}

/// World sentences shared by every report of one evaluation, cycling
/// through the contexts.
pub fn reference_corpus(world: &GrammarWorld, size: usize, seed: u64) -> Vec<SequenceSample> {
    let mut rng = derive_rng(seed, CORPUS_STREAM);
    let n = world.contexts().len();
    (0..size).map(|i| world.sample_sentence(i % n, &mut rng)).collect()
}

/// Loads `checkpoint` and writes `<kind>.csv` / `<kind>.json` for each
/// requested kind. `seed` drives every evaluation RNG stream.
pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint: &Path, kinds: &[EvalKind], seed: u64, out: &Path) -> Result<EvalOutcome> {
    let ckpt = load_checkpoint(checkpoint)?;
    let world = ckpt.config.load_world()?;
    let cap = ckpt.config.kl_cap;
    let trainer = Trainer::from_checkpoint(ckpt, &world)?;
    evaluate_players(cfg, &world, trainer.policy(), trainer.discriminator(), cap, kinds, seed, out)
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_players(
    cfg: &ExperimentConfig,
    world: &GrammarWorld,
    policy: &PolicyNet,
    disc: &DiscriminatorNet,
    kl_cap: usize,
    kinds: &[EvalKind],
    seed: u64,
    out: &Path,
) -> Result<EvalOutcome> {
    ensure_dir(out)?;
    let e = &cfg.evaluation;
    let vocab = world.vocab();
    let ctx_name = |id: usize| world.contexts()[id].name.clone();
    let corpus = reference_corpus(world, e.corpus_size, seed);
    let mut outcome = EvalOutcome::default();
    for &kind in kinds {
        let mut rng = derive_rng(seed, EVAL_STREAM + kind.stream());
        let name = kind.name();
        match kind {
            EvalKind::Compactness => {
                let report = compactness_probe(world, disc, &corpus, e.compactness, &mut rng)?;
                for w in &report.warnings {
                    log::warn!("compactness: {w}");
                }
                let rows: Vec<CompactnessRow> = report
                    .probes
                    .iter()
                    .map(|p| CompactnessRow {
                        sentence: p.sentence,
                        context: ctx_name(p.context),
                        position: p.position,
                        original: vocab.name(p.original).to_string(),
                        replacement: vocab.name(p.replacement).to_string(),
                        delta: p.delta,
                        distance: p.distance,
                        same_class: p.same_class,
                    })
                    .collect();
                let same = report.probes.iter().filter(|p| p.same_class).count();
                let summary = CompactnessSummary {
                    probes_same: same,
                    probes_different: report.probes.len() - same,
                    skipped: report.skipped,
                    same_class: report.same_class,
                    different_class: report.different_class,
                    warnings: report.warnings.clone(),
                };
                write_report(out, &cfg.output, name, &rows, &summary)?;
                outcome.compactness = Some(summary);
            }
            EvalKind::Diversity => {
                let generated: Vec<(usize, Vec<TokenId>)> = match e.diversity_source {
                    DiversitySource::Reference => corpus.iter().map(|s| (s.context, s.tokens.clone())).collect(),
                    DiversitySource::Policy => {
                        let n = world.contexts().len();
                        (0..e.diversity_samples)
                            .map(|i| {
                                let r = policy.sample_sequence(&world.contexts()[i % n], &mut rng, world.max_len())?;
                                Ok((i % n, r.sample.tokens))
                            })
                            .collect::<Result<_>>()?
                    }
                };
                let refs: Vec<&[TokenId]> = corpus.iter().map(|s| s.tokens.as_slice()).collect();
                let seqs: Vec<&[TokenId]> = generated.iter().map(|(_, t)| t.as_slice()).collect();
                let report = diversity_metrics(&seqs, &refs, &refs)?;
                let rows: Vec<DiversityRow> = generated
                    .iter()
                    .enumerate()
                    .map(|(i, (c, t))| DiversityRow {
                        index: i,
                        context: ctx_name(*c),
                        sequence: render(vocab, t),
                        novel: !refs.contains(&t.as_slice()),
                    })
                    .collect();
                write_report(out, &cfg.output, name, &rows, &report)?;
                outcome.diversity = Some(report);
            }
            EvalKind::Topk => {
                let mut rows = Vec::new();
                let mut shortfall = Vec::new();
                for ctx in world.contexts() {
                    let top = top_k_by_reward(
                        policy,
                        disc,
                        ctx,
                        e.topk,
                        e.topk_samples,
                        world.max_len(),
                        e.compactness.scorer,
                        &mut rng,
                    )?;
                    if top.shortfall {
                        shortfall.push(ctx.name.clone());
                    }
                    rows.extend(top.ranked.iter().enumerate().map(|(r, s)| TopKRow {
                        context: ctx.name.clone(),
                        rank: r + 1,
                        sequence: render(vocab, &s.tokens),
                        score: s.score,
                    }));
                }
                let summary = TopKSummary {
                    contexts: world.contexts().len(),
                    k: e.topk,
                    shortfall_contexts: shortfall,
                };
                write_report(out, &cfg.output, name, &rows, &summary)?;
                outcome.topk = Some(summary);
            }
            EvalKind::Kl => {
                let kl = policy_kl_by_context(world, policy, kl_cap)?;
                let rows: Vec<KlRow> = kl
                    .iter()
                    .enumerate()
                    .map(|(c, &kl)| KlRow { context: ctx_name(c), kl })
                    .collect();
                let summary = KlSummary {
                    kl_mean: kl.iter().sum::<f64>() / kl.len() as f64,
                    kl_max: kl.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                };
                write_report(out, &cfg.output, name, &rows, &summary)?;
                outcome.kl = Some(summary);
            }
            EvalKind::Recovery => {
                let report = reward_recovery(world, disc, e.recovery_probes, e.recovery_valid_fraction, &mut rng)?;
                let rows: Vec<RecoveryRow> = report
                    .probes
                    .iter()
                    .map(|p| RecoveryRow {
                        context: ctx_name(p.context),
                        prefix: render(vocab, &p.prefix),
                        token: vocab.name(p.token).to_string(),
                        learned: p.learned,
                        truth: p.truth,
                    })
                    .collect();
                let summary = RecoverySummary {
                    probes: rows.len(),
                    pearson: report.pearson,
                };
                write_report(out, &cfg.output, name, &rows, &summary)?;
                outcome.recovery = Some(summary);
            }
        }
    }
    Ok(outcome)
}

/// One sequence to diagnose, optionally with the position known to be wrong.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosisInput {
    pub context: usize,
    pub tokens: Vec<TokenId>,
    pub corrupted: Option<usize>,
}

/// Parses tab-separated lines `context<TAB>tokens[<TAB>position]`. Blank
/// lines and lines starting with `#` are skipped.
pub fn parse_diagnosis_input(world: &GrammarWorld, text: &str) -> Result<Vec<DiagnosisInput>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::Config(format!(
                "line {n}: expected 'context<TAB>tokens[<TAB>position]'"
            )));
        }
        let context = world
            .contexts()
            .iter()
            .find(|c| c.name == fields[0].trim())
            .ok_or_else(|| Error::Config(format!("line {n}: unknown context '{}'", fields[0].trim())))?
            .id;
        let tokens = parse_tokens(world.vocab(), fields[1]).map_err(|e| Error::Config(format!("line {n}: {e}")))?;
        if tokens.is_empty() {
            return Err(Error::Config(format!("line {n}: empty sequence")));
        }
        let corrupted = match fields.get(2) {
            Some(p) => Some(
                p.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&p| p < tokens.len())
                    .ok_or_else(|| Error::Config(format!("line {n}: bad position '{}'", p.trim())))?,
            ),
            None => None,
        };
        out.push(DiagnosisInput {
            context,
            tokens,
            corrupted,
        });
    }
    Ok(out)
}

pub fn format_diagnosis_input(world: &GrammarWorld, items: &[DiagnosisInput]) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&world.contexts()[it.context].name);
        s.push('\t');
        s.push_str(&render(world.vocab(), &it.tokens));
        if let Some(p) = it.corrupted {
            s.push_str(&format!("\t{p}"));
        }
        s.push('\n');
    }
    s
}

/// World sentences with one token swapped for a token of another class.
pub fn injected_corpus<R: Rng + ?Sized>(world: &GrammarWorld, n: usize, rng: &mut R) -> Vec<DiagnosisInput> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (ctx, s) = world.sample_pair(rng);
        if let Some((tokens, pos)) = inject_wrong_token(world.vocab(), &s.tokens, rng) {
            out.push(DiagnosisInput {
                context: ctx.id,
                tokens,
                corrupted: Some(pos),
            });
        }
    }
    out
}

/// Flags and rewrites every sequence of `input`; writes `diagnosis.csv` and
/// `diagnosis.json`. Metric references are fresh world sentences of the same
/// context.
pub fn cmd_diagnose(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    input: &Path,
    seed: u64,
    out: &Path,
) -> Result<DiagnosisSummary> {
    let ckpt = load_checkpoint(checkpoint)?;
    let world = ckpt.config.load_world()?;
    let text = fs::read_to_string(input)
        .map_err(|e| Error::Config(format!("cannot read input {}: {e}", input.display())))?;
    let items = parse_diagnosis_input(&world, &text)?;
    let trainer = Trainer::from_checkpoint(ckpt, &world)?;
    diagnose_inputs(cfg, &world, trainer.policy(), trainer.discriminator(), &items, seed, out)
}

pub fn diagnose_inputs(
    cfg: &ExperimentConfig,
    world: &GrammarWorld,
    policy: &PolicyNet,
    disc: &DiscriminatorNet,
    items: &[DiagnosisInput],
    seed: u64,
    out: &Path,
) -> Result<DiagnosisSummary> {
    ensure_dir(out)?;
    let e = &cfg.evaluation;
    let mut rng = derive_rng(seed, EVAL_STREAM + 100);
    let mut ref_rng = derive_rng(seed, CORPUS_STREAM + 1);
    let mut rows = Vec::with_capacity(items.len());
    let (mut flagged, mut known, mut hits) = (0, 0, 0);
    let (mut gain, mut random_gain) = (0.0, 0.0);
    for (i, it) in items.iter().enumerate() {
        let ctx = world.context(it.context)?;
        let refs: Vec<Vec<TokenId>> = (0..e.diagnosis_references)
            .map(|_| world.sample_sentence(it.context, &mut ref_rng).tokens)
            .collect();
        let r = diagnose_and_rewrite(disc, policy, ctx, &it.tokens, &refs, world.max_len(), e.diagnosis, &mut rng)?;
        if let Some(t) = r.flagged {
            flagged += 1;
            gain += r.improvement().unwrap_or(0.0);
            random_gain += r.random_improvement().unwrap_or(0.0);
            if let Some(p) = it.corrupted {
                known += 1;
                hits += (p == t) as usize;
            }
        }
        let opt = |t: &Option<Vec<TokenId>>| t.as_ref().map(|t| render(world.vocab(), t)).unwrap_or_default();
        rows.push(DiagnosisRow {
            index: i,
            context: ctx.name.clone(),
            sequence: render(world.vocab(), &it.tokens),
            flagged: r.flagged,
            rewrite: opt(&r.rewrite),
            random_position: r.random_position,
            random_rewrite: opt(&r.random_rewrite),
            metric_original: r.metric_original,
            metric_rewrite: r.metric_rewrite,
            metric_random: r.metric_random,
            delta_vs_random: r.delta_vs_random(),
        });
    }
    let mean = |x: f64| (flagged > 0).then(|| x / flagged as f64);
    let summary = DiagnosisSummary {
        sequences: items.len(),
        flagged,
        precision: (known > 0).then(|| hits as f64 / known as f64),
        mean_improvement: mean(gain),
        mean_random_improvement: mean(random_gain),
    };
    write_report(out, &cfg.output, "diagnosis", &rows, &summary)?;
    Ok(summary)
}

/// Runs both game variants from one initial point; writes `vanilla.csv`,
/// `refined.csv` and `dynamics.json`.
pub fn cmd_dynamics(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Vec<GameSummary>> {
    ensure_dir(out)?;
    let d = &cfg.dynamics;
    let init = match d.init {
        GameInit::Equilibrium => GameState::equilibrium(&d.p_true)?,
        GameInit::Random => GameState::random(d.p_true.len(), &mut derive_rng(seed, DYNAMICS_STREAM)),
    };
    let mut summaries = Vec::new();
    for (variant, file) in [(GameVariant::Vanilla, "vanilla.csv"), (GameVariant::Refined, "refined.csv")] {
        let t = one_step_game(&d.p_true, &init, variant, d.game)?;
        write_game_csv(create(&out.join(file))?, &t)?;
        summaries.push(GameSummary::of(&t));
    }
    write_json(create(&out.join("dynamics.json"))?, "dynamics", &summaries)?;
    Ok(summaries)
}

/// One line of the ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct AblationRowReport {
    pub name: String,
    pub loss: String,
    pub constant_term: bool,
    pub conditional_term: bool,
    /// `ok` or `failed: <reason>`.
    pub status: String,
    pub kl_mean: Option<f64>,
    pub window_mean_abs_dev: Option<f64>,
    pub window_std_d: Option<f64>,
    pub distinct: Option<usize>,
    pub coverage: Option<f64>,
    pub novel_ratio: Option<f64>,
    pub rp_same: Option<f64>,
    pub rp_different: Option<f64>,
    pub recovery_pearson: Option<f64>,
}

impl CsvRow for AblationRowReport {
    const SCHEMA: &'static str = "ablation";
    const HEADER: &'static [&'static str] = &[
        "name",
        "loss",
        "constant_term",
        "conditional_term",
        "status",
        "kl_mean",
        "window_mean_abs_dev",
        "window_std_d",
        "distinct",
        "coverage",
        "novel_ratio",
        "rp_same",
        "rp_different",
        "recovery_pearson",
    ];
}

/// Mean of `f` over the last 10% of the run's evaluation points.
fn window_mean(record: &RunRecord, total: usize, f: impl Fn(&crate::training::EvalPoint) -> f64) -> Option<f64> {
    let w = record.final_window(total, 0.1);
    (!w.is_empty()).then(|| w.iter().map(|p| f(p)).sum::<f64>() / w.len() as f64)
}

/// Trains and evaluates every matrix row under `out/<name>/` with the same
/// seed, then writes `ablation.csv`. Rows that fail keep their line with a
/// failure status.
pub fn cmd_ablate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<AblationRowReport>> {
    cfg.ablation.validate()?;
    ensure_dir(out)?;
    let mut table = Vec::new();
    for row in &cfg.ablation.rows {
        let mut sub = cfg.clone();
        sub.training.loss = row.loss;
        let dir = out.join(&row.name);
        log::info!("ablation row {}", row.name);
        let mut line = AblationRowReport {
            name: row.name.clone(),
            loss: row.loss.kind.to_string(),
            constant_term: row.loss.constant_term,
            conditional_term: row.loss.conditional_term,
            status: "ok".into(),
            kl_mean: None,
            window_mean_abs_dev: None,
            window_std_d: None,
            distinct: None,
            coverage: None,
            novel_ratio: None,
            rp_same: None,
            rp_different: None,
            recovery_pearson: None,
        };
        let result = cmd_train(&sub, &dir).and_then(|t| {
            let n = sub.training.iterations;
            line.kl_mean = t.record.last().map(|p| p.kl_mean);
            line.window_mean_abs_dev = window_mean(&t.record, n, |p| p.mean_abs_dev);
            line.window_std_d = window_mean(&t.record, n, |p| p.std_d);
            cmd_eval(&sub, &t.checkpoint, &sub.evaluation.reports, sub.training.seed, &dir)
        });
        match result {
            Ok(ev) => {
                if let Some(kl) = ev.kl {
                    line.kl_mean = Some(kl.kl_mean);
                }
                if let Some(d) = ev.diversity {
                    line.distinct = Some(d.distinct);
                    line.coverage = Some(d.coverage);
                    line.novel_ratio = Some(d.novel_ratio);
                }
                if let Some(c) = ev.compactness {
                    line.rp_same = c.same_class.map(|t| t.pearson);
                    line.rp_different = c.different_class.map(|t| t.pearson);
                }
                line.recovery_pearson = ev.recovery.map(|r| r.pearson);
            }
            Err(e) => {
                log::error!("ablation row {} failed: {e}", row.name);
                line.status = format!("failed: {e}");
            }
        }
        table.push(line);
    }
    write_csv(create(&out.join(ABLATION_CSV))?, &table)?;
    Ok(table)
}
