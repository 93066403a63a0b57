//! Compactness of learned rewards: swap the first object token of each
//! sentence for a synonym or a token of another class and correlate the
//! change in sentence reward with the embedding distance of the swap.
//! Compares rAIRL with vanilla AIRL. Usage: `compactness [ITERATIONS]`.

use rairl::cli::reference_corpus;
use rairl::evaluation::{compactness_probe, CompactnessOptions};
use rairl::losses::LossSpec;
use rairl::numerics::derive_rng;
use rairl::training::{train, TrainingConfig};

fn main() -> rairl::Result<()> {
    let iterations = std::env::args().nth(1).map_or(20_000, |a| a.parse().expect("ITERATIONS must be an integer"));
    let base = TrainingConfig {
        iterations,
        eval_every: iterations,
        ..Default::default()
    };
    let world = base.load_world()?;
    let corpus = reference_corpus(&world, 300, 0);
    for (name, loss) in [("rAIRL", LossSpec::rairl()), ("AIRL", LossSpec::airl())] {
        let run = train(TrainingConfig { loss, ..base.clone() }, &world)?;
        let report = compactness_probe(&world, &run.discriminator, &corpus, CompactnessOptions::default(), &mut derive_rng(0, 9))?;
        let fmt = |t: Option<rairl::evaluation::CorrelationTriple>| {
            t.map_or("degenerate".to_string(), |t| {
                format!("pearson {:.3} spearman {:.3} kendall {:.3}", t.pearson, t.spearman, t.kendall)
            })
        };
        println!("{name}");
        println!("  same class:      {}", fmt(report.same_class));
        println!("  different class: {}", fmt(report.different_class));
    }
    Ok(())
}
