//! Train and evaluate every loss variant of the default ablation matrix and
//! print the comparison table. Usage: `ablation [ITERATIONS] [OUT_DIR]`
//! (defaults 2000 and `out/ablation`).

use std::path::PathBuf;

use rairl::cli::{cmd_ablate, ExperimentConfig};

fn main() -> rairl::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map_or(2000, |a| a.parse().expect("ITERATIONS must be an integer"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/ablation".into()));
    let mut cfg = ExperimentConfig::default();
    cfg.training.iterations = iterations;
    cfg.training.eval_every = (iterations / 4).max(1);
    let table = cmd_ablate(&cfg, &out)?;
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
    println!(
        "{:<22} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}  status",
        "row", "KL", "|D-.5|", "distinct", "coverage", "RP_S", "RP_D"
    );
    for r in &table {
        println!(
            "{:<22} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}  {}",
            r.name,
            opt(r.kl_mean),
            opt(r.window_mean_abs_dev),
            r.distinct.map_or("-".into(), |d| d.to_string()),
            opt(r.coverage),
            opt(r.rp_same),
            opt(r.rp_different),
            r.status
        );
    }
    println!("table and per-row reports in {}", out.display());
    Ok(())
}
