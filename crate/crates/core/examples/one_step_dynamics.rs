//! The one-step game: vanilla AIRL keeps oscillating around the true
//! distribution while the refined generator settles at D = 0.5.

use rairl::evaluation::{one_step_game, GameConfig, GameState, GameVariant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> rairl::Result<()> {
    let p = [0.5, 0.25, 0.15, 0.10];
    let init = GameState::random(p.len(), &mut ChaCha8Rng::seed_from_u64(3));
    let cfg = GameConfig::default();
    for variant in [GameVariant::Vanilla, GameVariant::Refined] {
        let t = one_step_game(&p, &init, variant, cfg)?;
        println!("{variant:?}");
        for row in t.rows.iter().step_by(250) {
            let pi: Vec<String> = row.pi.iter().map(|v| format!("{v:.3}")).collect();
            let d: Vec<String> = row.d.iter().map(|v| format!("{v:.3}")).collect();
            println!("  step {:>5}  pi [{}]  D [{}]", row.step, pi.join(" "), d.join(" "));
        }
        println!(
            "  final-window std of D {:.3e}, mean |D-0.5| {:.3e}\n",
            t.window_std_d(0.1),
            t.window_mean_abs_dev(0.1)
        );
    }
    Ok(())
}
