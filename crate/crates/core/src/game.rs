//! Transmission-chain game engine.
//!
//! A game is a chain of rounds played on one hidden word. Each round belongs
//! to one player who makes `turns_per_round` guesses and gets a score after
//! each. Between rounds a social signal is passed forward according to the
//! configured channel.
//!
//! State changes only through [`GameEvent`]s: commands validate their input,
//! build the events, and hand them to [`GameState::apply`]. Replaying a log
//! through `apply` therefore rebuilds the exact same state.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::agents::{AgentDescriptor, AgentKindTag};
use crate::embedding::EmbeddingTable;
use crate::events::{EventPayload, GameEvent};
use crate::scoring::{score_guess, ScoreConfig, ScoringError, DEFAULT_MAX_SCORE};

/// Longest long-advice payload, in characters.
pub const LONG_ADVICE_MAX_CHARS: usize = 1000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GameError {
    #[error("invalid game config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("guess is empty")]
    EmptyGuess,
    #[error("game {0} is already complete")]
    GameComplete(String),
    #[error("round {round} is assigned to {expected}, not {got}")]
    WrongAgent {
        round: u32,
        expected: String,
        got: String,
    },
    #[error("advice for round {0} must be submitted before play continues")]
    AdviceRequired(u32),
    #[error("channel {0:?} does not carry advice")]
    WrongChannel(ChannelKind),
    #[error("no advice is due: the round is not complete or advice was already given")]
    AdviceNotDue,
    #[error("short advice must be a single word, got {0:?}")]
    MultiTokenAdvice(String),
    #[error("short advice is empty")]
    EmptyAdvice,
    #[error("event {seq} cannot be applied: {reason}")]
    BadEvent { seq: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    BestGuess,
    FullHistory,
    ShortAdvice,
    LongAdvice,
}

impl ChannelKind {
    pub fn carries_advice(self) -> bool {
        matches!(self, ChannelKind::ShortAdvice | ChannelKind::LongAdvice)
    }
}

impl std::str::FromStr for ChannelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
            .map_err(|_| format!("unknown channel {s:?}"))
    }
}

/// Which best guess a `BestGuess` channel forwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintMode {
    /// Best guess over all earlier rounds.
    #[default]
    RunningMax,
    /// Best guess of the immediately preceding round only.
    PreviousRound,
}

fn default_rounds() -> u32 {
    10
}

fn default_max_score() -> f64 {
    DEFAULT_MAX_SCORE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub game_id: String,
    pub target: String,
    #[serde(default = "default_rounds")]
    pub rounds_per_game: u32,
    #[serde(default = "default_rounds")]
    pub turns_per_round: u32,
    pub channel: ChannelKind,
    #[serde(default)]
    pub hint_mode: HintMode,
    /// One descriptor per round.
    pub roster: Vec<AgentDescriptor>,
    pub seed: u64,
    #[serde(default = "default_max_score")]
    pub max_score: f64,
    /// Free-form condition label carried into the log for analysis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
}

impl GameConfig {
    /// Ten rounds of ten turns on the best-guess channel.
    pub fn new(
        game_id: impl Into<String>,
        target: impl Into<String>,
        roster: Vec<AgentDescriptor>,
        seed: u64,
    ) -> Self {
        GameConfig {
            game_id: game_id.into(),
            target: target.into(),
            rounds_per_game: roster.len() as u32,
            turns_per_round: default_rounds(),
            channel: ChannelKind::BestGuess,
            hint_mode: HintMode::RunningMax,
            roster,
            seed,
            max_score: DEFAULT_MAX_SCORE,
            condition: None,
        }
    }

    pub fn score_config(&self) -> ScoreConfig {
        ScoreConfig {
            max_score: self.max_score,
            target: self.target.clone(),
            reveal_max_to_players: false,
        }
    }

    pub fn total_turns(&self) -> usize {
        self.rounds_per_game as usize * self.turns_per_round as usize
    }

    pub fn player_for_round(&self, round: u32) -> &AgentDescriptor {
        &self.roster[round as usize - 1]
    }

    pub fn validate(&self, table: &EmbeddingTable) -> Result<(), GameError> {
        if self.game_id.is_empty() {
            return Err(GameError::InvalidConfig("game_id is empty".into()));
        }
        if self.rounds_per_game == 0 || self.turns_per_round == 0 {
            return Err(GameError::InvalidConfig(
                "rounds_per_game and turns_per_round must be at least 1".into(),
            ));
        }
        if self.roster.len() != self.rounds_per_game as usize {
            return Err(GameError::InvalidConfig(format!(
                "roster has {} entries for {} rounds",
                self.roster.len(),
                self.rounds_per_game
            )));
        }
        for d in &self.roster {
            d.validate().map_err(GameError::InvalidConfig)?;
        }
        self.score_config().validate(table)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Guess {
    pub round: u32,
    pub turn: u32,
    pub word: String,
    pub raw_input: String,
    pub score: f64,
    pub agent_id: String,
    pub agent_kind: AgentKindTag,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredWord {
    pub word: String,
    pub score: f64,
}

impl ScoredWord {
    pub fn new(word: impl Into<String>, score: f64) -> Self {
        ScoredWord {
            word: word.into(),
            score,
        }
    }
}

/// A prior guess as shown to later players: no player identity, no kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleGuess {
    pub round: u32,
    pub turn: u32,
    pub word: String,
    pub score: f64,
}

/// What a round's player receives from the rounds before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SocialSignal {
    None,
    BestGuess { word: String, score: f64 },
    FullHistory { guesses: Vec<VisibleGuess> },
    ShortAdvice { word: String },
    LongAdvice { text: String },
}

/// Snapshot handed to the player whose turn it is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub round: u32,
    pub turn: u32,
    pub turns_per_round: u32,
    pub signal: SocialSignal,
    pub own_round_history: Vec<ScoredWord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameStatus {
    InProgress,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdviceRecord {
    pub round: u32,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuessOutcome {
    pub word: String,
    pub score: f64,
    pub round_completed: bool,
    pub game_completed: bool,
    pub events: Vec<GameEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub config: GameConfig,
    pub guesses: Vec<Guess>,
    pub current_round: u32,
    pub current_turn: u32,
    pub running_best: Option<ScoredWord>,
    /// Best guess of each completed round, in round order.
    pub round_bests: Vec<ScoredWord>,
    pub advice_chain: Vec<AdviceRecord>,
    /// Round whose advice has not been submitted yet.
    pub awaiting_advice: Option<u32>,
    pub status: GameStatus,
    /// Agent bound to the current round (set by its first guess).
    pub round_player: Option<String>,
    pub next_seq: u64,
}

/// Trims, lowercases and strips leading/trailing non-letters. Interior
/// punctuation is kept, which makes the word out-of-vocabulary.
pub fn sanitize_guess(raw: &str) -> String {
    raw.trim()
        .to_lowercase()
        .trim_matches(|c: char| !c.is_alphabetic())
        .to_string()
}

impl GameState {
    /// Validates the config and opens the game at round 1, turn 1.
    pub fn start(
        config: GameConfig,
        table: &EmbeddingTable,
        now: DateTime<Utc>,
    ) -> Result<(GameState, GameEvent), GameError> {
        config.validate(table)?;
        let event = GameEvent {
            game_id: config.game_id.clone(),
            seq: 0,
            timestamp: now,
            payload: EventPayload::GameStarted {
                config: config.clone(),
                player_facing: false,
            },
        };
        let state = GameState::from_started(&event)?;
        Ok((state, event))
    }

    fn from_started(event: &GameEvent) -> Result<GameState, GameError> {
        let EventPayload::GameStarted { config, .. } = &event.payload else {
            return Err(GameError::BadEvent {
                seq: event.seq,
                reason: "log must begin with game_started".into(),
            });
        };
        Ok(GameState {
            config: config.clone(),
            guesses: Vec::with_capacity(config.total_turns()),
            current_round: 1,
            current_turn: 1,
            running_best: None,
            round_bests: Vec::new(),
            advice_chain: Vec::new(),
            awaiting_advice: None,
            status: GameStatus::InProgress,
            round_player: None,
            next_seq: event.seq + 1,
        })
    }

    /// Rebuilds a game from its full event log.
    pub fn replay<'a, I>(events: I) -> Result<GameState, GameError>
    where
        I: IntoIterator<Item = &'a GameEvent>,
    {
        let mut iter = events.into_iter();
        let first = iter.next().ok_or(GameError::BadEvent {
            seq: 0,
            reason: "empty log".into(),
        })?;
        let mut state = GameState::from_started(first)?;
        for e in iter {
            state.apply(e)?;
        }
        Ok(state)
    }

    pub fn game_id(&self) -> &str {
        &self.config.game_id
    }

    pub fn is_complete(&self) -> bool {
        self.status == GameStatus::Complete
    }

    /// Player slot of the round currently being played.
    pub fn current_player(&self) -> &AgentDescriptor {
        self.config.player_for_round(self.current_round)
    }

    pub fn completed_rounds(&self) -> u32 {
        self.round_bests.len() as u32
    }

    /// Guesses of one round, in turn order.
    pub fn round_guesses(&self, round: u32) -> &[Guess] {
        let per = self.config.turns_per_round as usize;
        let start = (round as usize - 1) * per;
        let end = (start + per).min(self.guesses.len());
        if start >= self.guesses.len() {
            &[]
        } else {
            &self.guesses[start..end]
        }
    }

    /// The signal handed to the player of `round`, built only from rounds
    /// before it.
    pub fn signal_for_round(&self, round: u32) -> SocialSignal {
        if round <= 1 {
            return SocialSignal::None;
        }
        let prior = (round - 1) as usize;
        match self.config.channel {
            ChannelKind::BestGuess => {
                let best = match self.config.hint_mode {
                    HintMode::RunningMax => {
                        let bests = &self.round_bests[..prior.min(self.round_bests.len())];
                        bests
                            .iter()
                            .fold(None::<&ScoredWord>, |acc, b| match acc {
                                Some(a) if b.score <= a.score => Some(a),
                                _ => Some(b),
                            })
                    }
                    HintMode::PreviousRound => self.round_bests.get(prior - 1),
                };
                match best {
                    Some(b) => SocialSignal::BestGuess {
                        word: b.word.clone(),
                        score: b.score,
                    },
                    None => SocialSignal::None,
                }
            }
            ChannelKind::FullHistory => SocialSignal::FullHistory {
                guesses: self
                    .guesses
                    .iter()
                    .filter(|g| g.round < round)
                    .map(|g| VisibleGuess {
                        round: g.round,
                        turn: g.turn,
                        word: g.word.clone(),
                        score: g.score,
                    })
                    .collect(),
            },
            ChannelKind::ShortAdvice | ChannelKind::LongAdvice => {
                match self.advice_chain.iter().rev().find(|a| a.round < round) {
                    Some(a) if self.config.channel == ChannelKind::ShortAdvice => {
                        SocialSignal::ShortAdvice {
                            word: a.payload.clone(),
                        }
                    }
                    Some(a) => SocialSignal::LongAdvice {
                        text: a.payload.clone(),
                    },
                    None => SocialSignal::None,
                }
            }
        }
    }

    /// What the current round's player sees before their next guess.
    pub fn observe(&self) -> Result<Observation, GameError> {
        if self.is_complete() {
            return Err(GameError::GameComplete(self.game_id().to_string()));
        }
        if let Some(r) = self.awaiting_advice {
            return Err(GameError::AdviceRequired(r));
        }
        Ok(Observation {
            round: self.current_round,
            turn: self.current_turn,
            turns_per_round: self.config.turns_per_round,
            signal: self.signal_for_round(self.current_round),
            own_round_history: self
                .round_guesses(self.current_round)
                .iter()
                .map(|g| ScoredWord::new(g.word.clone(), g.score))
                .collect(),
        })
    }

    fn check_agent(&self, agent_id: &str) -> Result<(), GameError> {
        let slot = self.current_player();
        let expected = match (&slot.kind.tag(), &self.round_player) {
            (AgentKindTag::Human, None) => return Ok(()),
            (AgentKindTag::Human, Some(bound)) => bound.as_str(),
            _ => slot.agent_id.as_str(),
        };
        if expected != agent_id {
            return Err(GameError::WrongAgent {
                round: self.current_round,
                expected: expected.to_string(),
                got: agent_id.to_string(),
            });
        }
        Ok(())
    }

    fn event(&self, seq: u64, now: DateTime<Utc>, payload: EventPayload) -> GameEvent {
        GameEvent {
            game_id: self.config.game_id.clone(),
            seq,
            timestamp: now,
            payload,
        }
    }

    /// Scores one guess for the current round and advances the turn.
    pub fn submit_guess(
        &mut self,
        table: &EmbeddingTable,
        raw: &str,
        agent_id: &str,
        now: DateTime<Utc>,
    ) -> Result<GuessOutcome, GameError> {
        if self.is_complete() {
            return Err(GameError::GameComplete(self.game_id().to_string()));
        }
        if let Some(r) = self.awaiting_advice {
            return Err(GameError::AdviceRequired(r));
        }
        if raw.trim().is_empty() {
            return Err(GameError::EmptyGuess);
        }
        self.check_agent(agent_id)?;

        let word = sanitize_guess(raw);
        let score = score_guess(table, &self.config.score_config(), &word);
        let round = self.current_round;
        let mut seq = self.next_seq;
        let mut events = vec![self.event(
            seq,
            now,
            EventPayload::GuessSubmitted {
                round,
                turn: self.current_turn,
                agent_id: agent_id.to_string(),
                agent_kind: self.current_player().kind.tag(),
                raw_input: raw.to_string(),
                word: word.clone(),
                score,
            },
        )];
        let round_completed = self.current_turn == self.config.turns_per_round;
        let game_completed = round_completed && round == self.config.rounds_per_game;
        if round_completed {
            let mut this_round: Vec<(String, f64)> = self
                .round_guesses(round)
                .iter()
                .map(|g| (g.word.clone(), g.score))
                .collect();
            this_round.push((word.clone(), score));
            let (best_word, best_score) = crate::scoring::best_of(&this_round)?;
            seq += 1;
            events.push(self.event(
                seq,
                now,
                EventPayload::RoundCompleted {
                    round,
                    best_word,
                    best_score,
                },
            ));
        }
        if game_completed {
            let (best_word, best_score) = match &self.running_best {
                Some(b) if b.score >= score => (b.word.clone(), b.score),
                _ => (word.clone(), score),
            };
            seq += 1;
            events.push(self.event(
                seq,
                now,
                EventPayload::GameCompleted {
                    target: self.config.target.clone(),
                    best_word,
                    best_score,
                    total_guesses: self.config.total_turns(),
                    player_facing: false,
                },
            ));
        }
        for e in &events {
            self.apply(e)?;
        }
        Ok(GuessOutcome {
            word,
            score,
            round_completed,
            game_completed,
            events,
        })
    }

    /// Records the advice the just-finished round passes to the next one.
    pub fn submit_advice(
        &mut self,
        payload: &str,
        now: DateTime<Utc>,
    ) -> Result<GameEvent, GameError> {
        let channel = self.config.channel;
        if !channel.carries_advice() {
            return Err(GameError::WrongChannel(channel));
        }
        let round = self.awaiting_advice.ok_or(GameError::AdviceNotDue)?;
        let payload = normalize_advice(channel, payload)?;
        let event = self.event(
            self.next_seq,
            now,
            EventPayload::AdviceSubmitted { round, payload },
        );
        self.apply(&event)?;
        Ok(event)
    }

    /// Applies one event. Used both for live commands and for replay.
    pub fn apply(&mut self, event: &GameEvent) -> Result<(), GameError> {
        let bad = |reason: String| GameError::BadEvent {
            seq: event.seq,
            reason,
        };
        if event.seq != self.next_seq {
            return Err(bad(format!("expected seq {}", self.next_seq)));
        }
        if event.game_id != self.config.game_id {
            return Err(bad(format!("event for game {}", event.game_id)));
        }
        match &event.payload {
            EventPayload::GameStarted { .. } => return Err(bad("game already started".into())),
            EventPayload::GuessSubmitted {
                round,
                turn,
                agent_id,
                agent_kind,
                raw_input,
                word,
                score,
            } => {
                if self.is_complete() || self.awaiting_advice.is_some() {
                    return Err(bad("guess while the game is not accepting guesses".into()));
                }
                if (*round, *turn) != (self.current_round, self.current_turn)
                    || *turn > self.config.turns_per_round
                {
                    return Err(bad(format!(
                        "guess for round {round} turn {turn}, expected round {} turn {}",
                        self.current_round, self.current_turn
                    )));
                }
                self.guesses.push(Guess {
                    round: *round,
                    turn: *turn,
                    word: word.clone(),
                    raw_input: raw_input.clone(),
                    score: *score,
                    agent_id: agent_id.clone(),
                    agent_kind: *agent_kind,
                    timestamp: event.timestamp,
                });
                if self.running_best.as_ref().is_none_or(|b| *score > b.score) {
                    self.running_best = Some(ScoredWord::new(word.clone(), *score));
                }
                if self.round_player.is_none() {
                    self.round_player = Some(agent_id.clone());
                }
                self.current_turn += 1;
            }
            EventPayload::RoundCompleted {
                round,
                best_word,
                best_score,
            } => {
                if *round != self.current_round
                    || self.current_turn != self.config.turns_per_round + 1
                {
                    return Err(bad(format!("round {round} is not finished")));
                }
                self.round_bests
                    .push(ScoredWord::new(best_word.clone(), *best_score));
                if *round < self.config.rounds_per_game {
                    if self.config.channel.carries_advice() {
                        self.awaiting_advice = Some(*round);
                    }
                    self.current_round += 1;
                    self.current_turn = 1;
                    self.round_player = None;
                }
            }
            EventPayload::AdviceSubmitted { round, payload } => {
                if self.awaiting_advice != Some(*round) {
                    return Err(bad(format!("no advice due for round {round}")));
                }
                self.advice_chain.push(AdviceRecord {
                    round: *round,
                    payload: payload.clone(),
                });
                self.awaiting_advice = None;
            }
            EventPayload::GameCompleted { .. } => {
                if self.guesses.len() != self.config.total_turns()
                    || self.completed_rounds() != self.config.rounds_per_game
                {
                    return Err(bad("game completed before all turns were played".into()));
                }
                self.status = GameStatus::Complete;
            }
        }
        self.next_seq += 1;
        Ok(())
    }
}

/// Applies the per-channel format rules to an advice payload.
pub fn normalize_advice(channel: ChannelKind, payload: &str) -> Result<String, GameError> {
    match channel {
        ChannelKind::ShortAdvice => {
            let word = sanitize_guess(payload);
            if word.is_empty() {
                Err(GameError::EmptyAdvice)
            } else if word.contains(char::is_whitespace) {
                Err(GameError::MultiTokenAdvice(payload.to_string()))
            } else {
                Ok(word)
            }
        }
        ChannelKind::LongAdvice => Ok(truncate_chars(payload.trim(), LONG_ADVICE_MAX_CHARS)),
        other => Err(GameError::WrongChannel(other)),
    }
}

pub fn truncate_chars(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((idx, _)) => text[..idx].to_string(),
        None => text.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentKind;

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_rows([
            ("ship", vec![1.0, 0.0, 0.0]),
            ("boat", vec![0.9, 0.1, 0.0]),
            ("harbor", vec![0.7, 0.7, 0.0]),
            ("river", vec![0.3, 0.9, 0.1]),
            ("pencil", vec![0.0, 0.1, 1.0]),
        ])
        .unwrap()
    }

    fn scripted_game(rounds: u32, turns: u32, channel: ChannelKind) -> GameConfig {
        let roster = (1..=rounds)
            .map(|r| AgentDescriptor::new(format!("p{r}"), AgentKind::Random))
            .collect();
        let mut cfg = GameConfig::new("g1", "ship", roster, 7);
        cfg.turns_per_round = turns;
        cfg.channel = channel;
        cfg
    }

    fn t0() -> DateTime<Utc> {
        DateTime::<Utc>::UNIX_EPOCH
    }

    #[test]
    fn minimal_game_is_one_guess() {
        let tb = table();
        let (mut g, _) = GameState::start(scripted_game(1, 1, ChannelKind::BestGuess), &tb, t0())
            .unwrap();
        let out = g.submit_guess(&tb, "boat", "p1", t0()).unwrap();
        assert!(out.round_completed && out.game_completed);
        assert_eq!(out.events.len(), 3);
        assert!(g.is_complete());
        assert!(matches!(
            g.submit_guess(&tb, "boat", "p1", t0()),
            Err(GameError::GameComplete(_))
        ));
        assert!(matches!(g.observe(), Err(GameError::GameComplete(_))));
    }

    #[test]
    fn start_rejects_bad_configs() {
        let tb = table();
        let mut cfg = scripted_game(2, 2, ChannelKind::BestGuess);
        cfg.target = "zzqx".into();
        assert!(matches!(
            GameState::start(cfg, &tb, t0()),
            Err(GameError::Scoring(ScoringError::TargetOutOfVocabulary(_)))
        ));
        let mut cfg = scripted_game(2, 2, ChannelKind::BestGuess);
        cfg.roster.pop();
        assert!(matches!(
            GameState::start(cfg, &tb, t0()),
            Err(GameError::InvalidConfig(_))
        ));
    }

    #[test]
    fn hint_is_running_max() {
        let tb = table();
        let (mut g, _) = GameState::start(scripted_game(3, 1, ChannelKind::BestGuess), &tb, t0())
            .unwrap();
        assert_eq!(g.observe().unwrap().signal, SocialSignal::None);
        let s1 = g.submit_guess(&tb, "boat", "p1", t0()).unwrap().score;
        assert_eq!(
            g.observe().unwrap().signal,
            SocialSignal::BestGuess { word: "boat".into(), score: s1 }
        );
        g.submit_guess(&tb, "river", "p2", t0()).unwrap();
        assert_eq!(
            g.observe().unwrap().signal,
            SocialSignal::BestGuess { word: "boat".into(), score: s1 }
        );
    }

    #[test]
    fn previous_round_hint_mode() {
        let tb = table();
        let mut cfg = scripted_game(3, 1, ChannelKind::BestGuess);
        cfg.hint_mode = HintMode::PreviousRound;
        let (mut g, _) = GameState::start(cfg, &tb, t0()).unwrap();
        g.submit_guess(&tb, "boat", "p1", t0()).unwrap();
        let s2 = g.submit_guess(&tb, "river", "p2", t0()).unwrap().score;
        assert_eq!(
            g.observe().unwrap().signal,
            SocialSignal::BestGuess { word: "river".into(), score: s2 }
        );
    }

    #[test]
    fn ties_keep_first_and_oov_consumes_turn() {
        let tb = table();
        let (mut g, _) = GameState::start(scripted_game(1, 4, ChannelKind::BestGuess), &tb, t0())
            .unwrap();
        let first = g.submit_guess(&tb, "Boat!", "p1", t0()).unwrap();
        assert_eq!(first.word, "boat");
        let oov = g.submit_guess(&tb, "zzqx", "p1", t0()).unwrap();
        assert_eq!(oov.score, 0.0);
        assert_eq!(g.current_turn, 3);
        g.submit_guess(&tb, "boat", "p1", t0()).unwrap();
        assert_eq!(g.guesses[0].agent_id, "p1");
        assert_eq!(g.running_best.as_ref().unwrap().word, "boat");
        let hit = g.submit_guess(&tb, "SHIP", "p1", t0()).unwrap();
        assert_eq!(hit.score, 201.69);
        assert_eq!(g.running_best.as_ref().unwrap().score, 201.69);
    }

    #[test]
    fn guess_errors() {
        let tb = table();
        let (mut g, _) = GameState::start(scripted_game(2, 2, ChannelKind::BestGuess), &tb, t0())
            .unwrap();
        assert_eq!(g.submit_guess(&tb, "   ", "p1", t0()), Err(GameError::EmptyGuess));
        assert!(matches!(
            g.submit_guess(&tb, "boat", "p2", t0()),
            Err(GameError::WrongAgent { .. })
        ));
        assert!(matches!(
            g.submit_advice("x", t0()),
            Err(GameError::WrongChannel(ChannelKind::BestGuess))
        ));
    }

    #[test]
    fn human_round_binds_first_guesser() {
        let tb = table();
        let roster = vec![AgentDescriptor::new("slot-1", AgentKind::Human)];
        let mut cfg = GameConfig::new("h", "ship", roster, 1);
        cfg.turns_per_round = 2;
        let (mut g, _) = GameState::start(cfg, &tb, t0()).unwrap();
        g.submit_guess(&tb, "boat", "alice", t0()).unwrap();
        assert!(matches!(
            g.submit_guess(&tb, "boat", "bob", t0()),
            Err(GameError::WrongAgent { .. })
        ));
        g.submit_guess(&tb, "river", "alice", t0()).unwrap();
        assert!(g.is_complete());
    }

    #[test]
    fn short_advice_flow() {
        let tb = table();
        let (mut g, _) = GameState::start(scripted_game(2, 1, ChannelKind::ShortAdvice), &tb, t0())
            .unwrap();
        assert_eq!(g.submit_advice("nautical", t0()), Err(GameError::AdviceNotDue));
        g.submit_guess(&tb, "boat", "p1", t0()).unwrap();
        assert_eq!(g.observe(), Err(GameError::AdviceRequired(1)));
        assert!(matches!(
            g.submit_guess(&tb, "boat", "p2", t0()),
            Err(GameError::AdviceRequired(1))
        ));
        assert!(matches!(
            g.submit_advice("think about boats", t0()),
            Err(GameError::MultiTokenAdvice(_))
        ));
        g.submit_advice("Nautical.", t0()).unwrap();
        assert_eq!(
            g.observe().unwrap().signal,
            SocialSignal::ShortAdvice { word: "nautical".into() }
        );
        assert_eq!(g.submit_advice("again", t0()), Err(GameError::AdviceNotDue));
        let out = g.submit_guess(&tb, "ship", "p2", t0()).unwrap();
        assert!(out.game_completed);
        assert_eq!(g.awaiting_advice, None);
    }

    #[test]
    fn long_advice_is_truncated_and_may_be_empty() {
        let tb = table();
        let (mut g, _) = GameState::start(scripted_game(3, 1, ChannelKind::LongAdvice), &tb, t0())
            .unwrap();
        g.submit_guess(&tb, "boat", "p1", t0()).unwrap();
        g.submit_advice("", t0()).unwrap();
        assert_eq!(
            g.observe().unwrap().signal,
            SocialSignal::LongAdvice { text: String::new() }
        );
        g.submit_guess(&tb, "boat", "p2", t0()).unwrap();
        g.submit_advice(&"é".repeat(5000), t0()).unwrap();
        let SocialSignal::LongAdvice { text } = g.observe().unwrap().signal else {
            panic!("expected long advice");
        };
        assert_eq!(text.chars().count(), LONG_ADVICE_MAX_CHARS);
    }

    #[test]
    fn full_history_grows_by_round() {
        let tb = table();
        let (mut g, _) = GameState::start(scripted_game(3, 2, ChannelKind::FullHistory), &tb, t0())
            .unwrap();
        for (i, w) in ["boat", "river", "harbor", "pencil"].iter().enumerate() {
            let agent = format!("p{}", i / 2 + 1);
            g.submit_guess(&tb, w, &agent, t0()).unwrap();
        }
        let SocialSignal::FullHistory { guesses } = g.observe().unwrap().signal else {
            panic!("expected history");
        };
        let words: Vec<_> = guesses.iter().map(|v| v.word.as_str()).collect();
        assert_eq!(words, ["boat", "river", "harbor", "pencil"]);
    }

    #[test]
    fn replay_matches_live_state() {
        let tb = table();
        let (mut g, start) =
            GameState::start(scripted_game(3, 2, ChannelKind::ShortAdvice), &tb, t0()).unwrap();
        let mut log = vec![start];
        let words = ["boat", "river", "harbor", "pencil", "ship", "zz"];
        for (i, w) in words.iter().enumerate() {
            let agent = format!("p{}", i / 2 + 1);
            let out = g.submit_guess(&tb, w, &agent, t0()).unwrap();
            log.extend(out.events);
            if out.round_completed && !out.game_completed {
                log.push(g.submit_advice("ship", t0()).unwrap());
            }
            assert_eq!(GameState::replay(&log).unwrap(), g);
        }
        assert!(g.is_complete());
    }

    #[test]
    fn replay_rejects_out_of_order_events() {
        let tb = table();
        let (mut g, start) =
            GameState::start(scripted_game(1, 2, ChannelKind::BestGuess), &tb, t0()).unwrap();
        let out = g.submit_guess(&tb, "boat", "p1", t0()).unwrap();
        let mut e = out.events[0].clone();
        e.seq = 5;
        assert!(matches!(
            GameState::replay(&[start, e]),
            Err(GameError::BadEvent { .. })
        ));
    }

    #[test]
    fn sanitize_rules() {
        assert_eq!(sanitize_guess("  \"Harbor!\" "), "harbor");
        assert_eq!(sanitize_guess("don't"), "don't");
        assert_eq!(sanitize_guess("?!"), "");
    }
}
