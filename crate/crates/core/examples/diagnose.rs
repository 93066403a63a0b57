//! Locate an injected wrong token by the first sharp drop in learned reward,
//! then rewrite the sentence from there with the policy. Usage:
//! `diagnose [ITERATIONS]`.

use rairl::cli::{diagnose_inputs, injected_corpus, ExperimentConfig};
use rairl::evaluation::reports::{read_csv, DiagnosisRow};
use rairl::numerics::derive_rng;
use rairl::training::train;

fn main() -> rairl::Result<()> {
    let iterations = std::env::args().nth(1).map_or(20_000, |a| a.parse().expect("ITERATIONS must be an integer"));
    let mut cfg = ExperimentConfig::default();
    cfg.training.iterations = iterations;
    cfg.training.eval_every = iterations;
    let world = cfg.training.load_world()?;
    let run = train(cfg.training.clone(), &world)?;

    let items = injected_corpus(&world, 200, &mut derive_rng(8, 0));
    let out = std::path::Path::new("out/diagnose");
    let s = diagnose_inputs(&cfg, &world, &run.policy, &run.discriminator, &items, 0, out)?;
    println!("{} sequences, {} flagged, precision {:.3}", s.sequences, s.flagged, s.precision.unwrap_or(0.0));
    println!(
        "mean metric gain: located {:.4}, random position {:.4}",
        s.mean_improvement.unwrap_or(0.0),
        s.mean_random_improvement.unwrap_or(0.0)
    );
    let rows: Vec<DiagnosisRow> = read_csv(std::fs::File::open(out.join("diagnosis.csv"))?)?;
    for (row, item) in rows.iter().zip(&items).take(5) {
        println!("\n  input    {}  (corrupted at {})", row.sequence, item.corrupted.unwrap());
        println!("  flagged  {:?}", row.flagged);
        println!("  rewrite  {}", row.rewrite);
    }
    Ok(())
}
