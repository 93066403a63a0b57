//! Train rAIRL on the default world and report convergence, reward recovery
//! and diversity. Usage: `train_rairl [ITERATIONS] [OUT_DIR]`
//! (defaults 20000 and `out/train_rairl`).

use std::path::PathBuf;

use rairl::cli::{evaluate_players, EvalKind, ExperimentConfig, RUN_CSV};
use rairl::training::Trainer;

fn main() -> rairl::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map_or(20_000, |a| a.parse().expect("ITERATIONS must be an integer"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/train_rairl".into()));
    std::fs::create_dir_all(&out)?;

    let mut cfg = ExperimentConfig::default();
    cfg.training.iterations = iterations;
    cfg.training.eval_every = (iterations / 20).max(1);
    let world = cfg.training.load_world()?;
    let mut trainer = Trainer::new(cfg.training.clone(), &world)?;
    trainer.run_until(iterations, |p| {
        println!(
            "iter {:>6}  mean D {:.3}  |D-0.5| {:.3}  KL {:.4}  distinct {}",
            p.iteration, p.mean_d, p.mean_abs_dev, p.kl_mean, p.distinct
        );
    })?;
    trainer.record().write_csv(std::fs::File::create(out.join(RUN_CSV))?)?;

    let kinds = [EvalKind::Recovery, EvalKind::Diversity, EvalKind::Kl];
    let ev = evaluate_players(
        &cfg,
        &world,
        trainer.policy(),
        trainer.discriminator(),
        cfg.training.kl_cap,
        &kinds,
        cfg.training.seed,
        &out,
    )?;
    let (rec, div, kl) = (ev.recovery.unwrap(), ev.diversity.unwrap(), ev.kl.unwrap());
    println!("reward recovery: Pearson(g, true reward) = {:.3}", rec.pearson);
    println!("diversity: {} distinct of {}, coverage {:.2}, novel {:.2}", div.distinct, div.total, div.coverage, div.novel_ratio);
    println!("exact KL: mean {:.4}, max {:.4}", kl.kl_mean, kl.kl_max);
    println!("reports in {}", out.display());
    Ok(())
}
