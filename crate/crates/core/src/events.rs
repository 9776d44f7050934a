//! Append-only game event log records.
//!
//! One JSON object per line. The hidden word only ever appears inside
//! `game_started` and `game_completed`, both flagged `player_facing: false`.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::agents::AgentKindTag;
use crate::game::GameConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameEvent {
    pub game_id: String,
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub payload: EventPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventPayload {
    GameStarted {
        config: GameConfig,
        player_facing: bool,
    },
    GuessSubmitted {
        round: u32,
        turn: u32,
        agent_id: String,
        agent_kind: AgentKindTag,
        raw_input: String,
        word: String,
        score: f64,
    },
    RoundCompleted {
        round: u32,
        best_word: String,
        best_score: f64,
    },
    AdviceSubmitted {
        round: u32,
        payload: String,
    },
    GameCompleted {
        target: String,
        best_word: String,
        best_score: f64,
        total_guesses: usize,
        player_facing: bool,
    },
}

impl EventPayload {
    pub fn type_name(&self) -> &'static str {
        match self {
            EventPayload::GameStarted { .. } => "game_started",
            EventPayload::GuessSubmitted { .. } => "guess_submitted",
            EventPayload::RoundCompleted { .. } => "round_completed",
            EventPayload::AdviceSubmitted { .. } => "advice_submitted",
            EventPayload::GameCompleted { .. } => "game_completed",
        }
    }
}

/// Serializes events as JSON lines.
pub fn to_jsonl(events: &[GameEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("events always serialize"));
        out.push('\n');
    }
    out
}

/// Parses JSON lines, skipping blank lines.
pub fn from_jsonl(text: &str) -> Result<Vec<GameEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
