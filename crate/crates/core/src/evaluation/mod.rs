//! Measurement procedures: correlation coefficients, compactness probes,
//! diversity, reward recovery, diagnosis-and-rewrite, top-k ranking, and the
//! one-step game.

mod compactness;
mod correlation;
mod diagnosis;
mod diversity;
mod game;
mod recovery;
pub mod reports;
mod topk;

pub use compactness::{
    compactness_probe, compactness_with, sentence_score, CompactnessOptions, CompactnessProbe, CompactnessReport,
    ProbeTarget, SentenceScorer,
};
pub use correlation::{average_ranks, correlations, kendall, pearson, spearman, CorrelationTriple};
pub use diagnosis::{
    diagnose_and_rewrite, flag_position, inject_wrong_token, DiagnosisOptions, DiagnosisResult, DropSignal, NEAR_ZERO,
};
pub use diversity::{diversity_metrics, DiversityReport};
pub use game::{game_gradients, one_step_game, GameConfig, GameRow, GameState, GameTrajectory, GameVariant};
pub use recovery::{reward_recovery, RecoveryProbe, RecoveryReport};
pub use topk::{top_k_by_reward, RankedSequence, TopK};

#[cfg(test)]
mod tests;
