use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{log_softmax, sigmoid, softmax};

/// Generator coefficient used in the one-step game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameVariant {
    /// Coefficient `f - log π - 1`.
    Vanilla,
    /// Coefficient `f - log π`.
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameConfig {
    pub steps: usize,
    pub generator_lr: f64,
    pub discriminator_lr: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            generator_lr: 0.1,
            discriminator_lr: 0.1,
        }
    }
}

/// Policy logits and one free reward per token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub logits: Vec<f64>,
    pub f: Vec<f64>,
}

impl GameState {
    /// `π = p_true` and `f = log π`, computed through the same log-softmax
    /// the dynamics use, so the refined coefficients are exactly zero.
    pub fn equilibrium(p_true: &[f64]) -> Result<Self> {
        check_distribution(p_true)?;
        let logits: Vec<f64> = p_true.iter().map(|p| p.ln()).collect();
        let f = log_softmax(&logits)?;
        Ok(Self { logits, f })
    }

    /// Standard-normal logits and `f ~ N(log(1/K), 1)`.
    pub fn random<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Self {
        let base = -(k as f64).ln();
        let mut normal = || -> f64 { StandardNormal.sample(rng) };
        let logits = (0..k).map(|_| normal()).collect();
        let f = (0..k).map(|_| base + normal()).collect();
        Self { logits, f }
    }
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() || p.len() > 4 {
        return Err(invalid("the one-step game takes 1 to 4 tokens"));
    }
    if p.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(invalid("true probabilities must be positive"));
    }
    if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(invalid("true probabilities must sum to 1"));
    }
    Ok(())
}

/// One recorded point of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRow {
    pub step: usize,
    pub pi: Vec<f64>,
    pub f: Vec<f64>,
    pub d: Vec<f64>,
    pub disc_grad_norm: f64,
    pub gen_grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTrajectory {
    pub variant: GameVariant,
    pub p_true: Vec<f64>,
    pub rows: Vec<GameRow>,
}

impl GameTrajectory {
    /// Rows in the last `fraction` of steps (at least one row).
    pub fn final_window(&self, fraction: f64) -> &[GameRow] {
        let steps = self.rows.len().saturating_sub(1);
        let n = ((steps as f64 * fraction).round() as usize).clamp(1, self.rows.len());
        &self.rows[self.rows.len() - n..]
    }

    /// Standard deviation of `D` over the window, averaged over tokens.
    pub fn window_std_d(&self, fraction: f64) -> f64 {
        let w = self.final_window(fraction);
        let k = self.p_true.len();
        let n = w.len() as f64;
        (0..k)
            .map(|j| {
                let m = w.iter().map(|r| r.d[j]).sum::<f64>() / n;
                (w.iter().map(|r| (r.d[j] - m).powi(2)).sum::<f64>() / n).sqrt()
            })
            .sum::<f64>()
            / k as f64
    }

    /// Mean of `|D - 0.5|` over the window and tokens.
    pub fn window_mean_abs_dev(&self, fraction: f64) -> f64 {
        let w = self.final_window(fraction);
        let total: f64 = w.iter().flat_map(|r| r.d.iter()).map(|d| (d - 0.5).abs()).sum();
        total / (w.len() * self.p_true.len()) as f64
    }

    pub fn last(&self) -> &GameRow {
        self.rows.last().expect("trajectory has an initial row")
    }
}

/// Exact gradients at a state: `(∂L_D/∂f, ∂L_G/∂logits)`.
///
/// The discriminator minimizes `Σ_w -p(w) log D(w) - π(w) log(1 - D(w))`.
/// The generator loss is the unweighted per-token sum `-Σ_w c(w) log π(w)`
/// with `c` held fixed; under a π-weighted expectation the constant term would
/// cancel since `E_π[∇ log π] = 0`.
pub fn game_gradients(p_true: &[f64], state: &GameState, variant: GameVariant) -> Result<(Vec<f64>, Vec<f64>)> {
    let pi = softmax(&state.logits)?;
    let log_pi = log_softmax(&state.logits)?;
    let gf = (0..pi.len())
        .map(|w| {
            let d = sigmoid(state.f[w] - log_pi[w]);
            -p_true[w] * (1.0 - d) + pi[w] * d
        })
        .collect();
    let offset = match variant {
        GameVariant::Vanilla => 1.0,
        GameVariant::Refined => 0.0,
    };
    let c: Vec<f64> = state.f.iter().zip(&log_pi).map(|(f, lp)| f - lp - offset).collect();
    let total: f64 = c.iter().sum();
    let gz = (0..pi.len()).map(|j| -c[j] + pi[j] * total).collect();
    Ok((gf, gz))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn row(step: usize, p_true: &[f64], s: &GameState, variant: GameVariant) -> Result<GameRow> {
    let (gf, gz) = game_gradients(p_true, s, variant)?;
    let log_pi = log_softmax(&s.logits)?;
    Ok(GameRow {
        step,
        pi: softmax(&s.logits)?,
        f: s.f.clone(),
        d: s.f.iter().zip(&log_pi).map(|(f, lp)| sigmoid(f - lp)).collect(),
        disc_grad_norm: norm(&gf),
        gen_grad_norm: norm(&gz),
    })
}

/// Alternating exact-gradient descent: each step updates `f` first, then the
/// logits with coefficients from the updated `f`. Row `k` is the state after
/// `k` steps with the gradients at that state.
pub fn one_step_game(
    p_true: &[f64],
    init: &GameState,
    variant: GameVariant,
    config: GameConfig,
) -> Result<GameTrajectory> {
    check_distribution(p_true)?;
    if init.logits.len() != p_true.len() || init.f.len() != p_true.len() {
        return Err(invalid("initial state size does not match the distribution"));
    }
    if !(config.generator_lr > 0.0 && config.discriminator_lr > 0.0) {
        return Err(invalid("game learning rates must be positive"));
    }
    let mut s = init.clone();
    let mut rows = Vec::with_capacity(config.steps + 1);
    rows.push(row(0, p_true, &s, variant)?);
    for step in 1..=config.steps {
        let (gf, _) = game_gradients(p_true, &s, variant)?;
        for (f, g) in s.f.iter_mut().zip(&gf) {
            *f -= config.discriminator_lr * g;
        }
        let (_, gz) = game_gradients(p_true, &s, variant)?;
        for (z, g) in s.logits.iter_mut().zip(&gz) {
            *z -= config.generator_lr * g;
        }
        rows.push(row(step, p_true, &s, variant)?);
    }
    Ok(GameTrajectory {
        variant,
        p_true: p_true.to_vec(),
        rows,
    })
}
