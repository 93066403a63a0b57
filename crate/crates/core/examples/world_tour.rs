//! The built-in grammar world: classes, contexts, samples with their exact
//! probabilities, next-token distributions and the ground-truth token reward.

use rairl::evaluation::reports::render;
use rairl::world::{GrammarWorld, DEFAULT_WORLD_SEED};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> rairl::Result<()> {
    let world = GrammarWorld::default_with_seed(DEFAULT_WORLD_SEED)?;
    let vocab = world.vocab();
    println!("{} tokens, {} contexts, max length {}", vocab.len(), world.contexts().len(), world.max_len());
    for class in vocab.classes() {
        let members: Vec<String> = class
            .members
            .iter()
            .zip(&class.weights)
            .map(|(&t, w)| format!("{}:{w:.2}", vocab.name(t)))
            .collect();
        let kind = if class.object { "object" } else { "other" };
        println!("  class {:<8} {kind:<6} {}", class.name, members.join(" "));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for ctx in world.contexts() {
        let support = world.support(ctx.id, 100_000)?;
        println!("\ncontext {} ({} sentences in support)", ctx.name, support.len());
        for _ in 0..3 {
            let s = world.sample_sentence(ctx.id, &mut rng);
            let p = world.true_sentence_prob(ctx.id, &s.tokens)?;
            println!("  p = {p:.5}  {}", render(vocab, &s.tokens));
        }
        let first = world.next_token_distribution(ctx.id, &[])?;
        let dist: Vec<String> = first.iter().map(|(t, p)| format!("{}:{p:.3}", vocab.name(*t))).collect();
        println!("  first token: {}", dist.join(" "));
    }

    // true reward of every token after a one-token prefix
    let s = world.sample_sentence(0, &mut rng);
    let prefix = &s.tokens[..1];
    println!("\ntrue token reward after '{}':", render(vocab, prefix));
    let mut rewards: Vec<(f64, &str)> = (0..vocab.len())
        .filter(|&t| t != vocab.bos())
        .map(|t| Ok((world.true_token_reward(0, prefix, t)?, vocab.name(t))))
        .collect::<rairl::Result<_>>()?;
    rewards.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (r, name) in rewards {
        println!("  {name:<10} {r:.3}");
    }
    Ok(())
}
