//! Similarity scoring of guesses against the hidden word.

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;

/// Score awarded for guessing the hidden word exactly.
pub const DEFAULT_MAX_SCORE: f64 = 201.69;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScoringError {
    #[error("max_score must be positive and finite, got {0}")]
    InvalidMaxScore(f64),
    #[error("target {0:?} is not in the vocabulary")]
    TargetOutOfVocabulary(String),
    #[error("cannot pick the best of an empty list")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub max_score: f64,
    pub target: String,
    /// When false, `max_score` never appears in anything shown to players.
    #[serde(default)]
    pub reveal_max_to_players: bool,
}

impl ScoreConfig {
    pub fn new(target: impl Into<String>) -> Self {
        ScoreConfig {
            max_score: DEFAULT_MAX_SCORE,
            target: target.into(),
            reveal_max_to_players: false,
        }
    }

    pub fn validate(&self, table: &EmbeddingTable) -> Result<(), ScoringError> {
        if !(self.max_score.is_finite() && self.max_score > 0.0) {
            return Err(ScoringError::InvalidMaxScore(self.max_score));
        }
        if !table.contains(&self.target) {
            return Err(ScoringError::TargetOutOfVocabulary(self.target.clone()));
        }
        Ok(())
    }
}

/// `max_score * cos(guess, target)`, or exactly 0 for a word the table does
/// not know. Negative values are returned as-is.
pub fn score_guess(table: &EmbeddingTable, cfg: &ScoreConfig, guess: &str) -> f64 {
    if guess == cfg.target {
        return cfg.max_score;
    }
    match (table.row_of(guess), table.row_of(&cfg.target)) {
        (Some(g), Some(t)) => cfg.max_score * table.cosine_rows(g, t),
        _ => 0.0,
    }
}

/// Highest-scoring entry; the earliest one wins a tie.
pub fn best_of<W: Clone>(guesses: &[(W, f64)]) -> Result<(W, f64), ScoringError> {
    let mut best: Option<&(W, f64)> = None;
    for g in guesses {
        if best.is_none_or(|b| g.1 > b.1) {
            best = Some(g);
        }
    }
    best.cloned().ok_or(ScoringError::Empty)
}
