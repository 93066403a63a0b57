//! Per-token view of a trained discriminator: learned reward g, shaping
//! h, shaped reward f, policy log-probability and decision boundary D, next
//! to the world's true token reward. Usage: `reward_breakdown [ITERATIONS]`.

use rairl::evaluation::inject_wrong_token;
use rairl::models::decision_boundary;
use rairl::training::{Trainer, TrainingConfig};
use rairl::world::TokenId;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> rairl::Result<()> {
    let iterations = std::env::args().nth(1).map_or(3000, |a| a.parse().expect("ITERATIONS must be an integer"));
    let cfg = TrainingConfig {
        iterations,
        eval_every: iterations,
        ..Default::default()
    };
    let world = cfg.load_world()?;
    let mut trainer = Trainer::new(cfg, &world)?;
    trainer.run()?;
    let (policy, disc) = (trainer.policy(), trainer.discriminator());
    let vocab = world.vocab();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (ctx, s) = loop {
        let (ctx, s) = world.sample_pair(&mut rng);
        if s.tokens.len() > 3 {
            break (ctx, s);
        }
    };
    let (bad, _) = inject_wrong_token(vocab, &s.tokens, &mut rng).expect("sentence has an inner content token");

    for (label, tokens) in [("true sentence", &s.tokens), ("corrupted", &bad)] {
        println!("{label} (context {}):", ctx.name);
        println!("  {:<10} {:>7} {:>7} {:>7} {:>8} {:>6} {:>6}", "token", "g", "h", "f", "log pi", "D", "true");
        let trace = disc.trace(ctx, tokens)?;
        let log_pi = policy.sequence_log_probs(ctx, tokens)?;
        for (i, &t) in tokens.iter().enumerate() {
            let prefix: &[TokenId] = &tokens[..i];
            let truth = world.true_token_reward(ctx.id, prefix, t)?;
            println!(
                "  {:<10} {:>7.3} {:>7.3} {:>7.3} {:>8.3} {:>6.3} {:>6.2}",
                vocab.name(t),
                trace.g[i],
                trace.shaping[i + 1],
                trace.f[i],
                log_pi[i],
                decision_boundary(trace.f[i], log_pi[i]),
                truth
            );
        }
    }
    Ok(())
}
