//! Interrupt a run, save a checkpoint, resume from it, and confirm the result
//! is bit-identical to an uninterrupted run.

use rairl::training::{load_checkpoint, save_checkpoint, Trainer, TrainingConfig};

fn main() -> rairl::Result<()> {
    let cfg = TrainingConfig {
        iterations: 400,
        eval_every: 100,
        ..Default::default()
    };
    let world = cfg.load_world()?;
    let dir = std::env::temp_dir().join("rairl-checkpoint-resume");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("half.ckpt");

    let mut first = Trainer::new(cfg.clone(), &world)?;
    first.run_until(200, |_| {})?;
    save_checkpoint(&path, &first.checkpoint())?;
    println!("saved iteration {} to {} ({} bytes)", first.iteration(), path.display(), std::fs::metadata(&path)?.len());

    let mut resumed = Trainer::from_checkpoint(load_checkpoint(&path)?, &world)?;
    resumed.run_until(400, |p| println!("resumed: iter {} KL {:.4}", p.iteration, p.kl_mean))?;

    let mut whole = Trainer::new(cfg, &world)?;
    whole.run()?;
    let same = resumed.checkpoint().to_bytes()? == whole.checkpoint().to_bytes()?;
    println!("resumed run identical to uninterrupted run: {same}");
    Ok(())
}
