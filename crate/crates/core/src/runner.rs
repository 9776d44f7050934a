//! Drives machine-played rounds of a game.

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, AgentKindTag, AgentRng, LlmExchange, PlayerFactory, PlayerSet};
use crate::events::GameEvent;
use crate::game::{GameConfig, GameError, GameState, ScoredWord};

/// Turn index used for the advice stream of a round.
const ADVICE_STREAM: u32 = u32::MAX;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Source of event timestamps. `Fixed` makes logs byte-reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    /// A fixed clock at the Unix epoch.
    pub fn zero() -> Self {
        Clock::Fixed(DateTime::<Utc>::UNIX_EPOCH)
    }

    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Fixed(t) => *t,
        }
    }
}

/// Random stream for one turn of one round, independent of every other turn,
/// so a game resumed mid-way draws the same values.
pub fn turn_rng(game_seed: u64, round: u32, turn: u32) -> AgentRng {
    let mut rng = AgentRng::seed_from_u64(game_seed);
    rng.set_stream((u64::from(round) << 32) | u64::from(turn));
    rng
}

/// An LLM exchange tagged with where in the game it happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub game_id: String,
    pub round: u32,
    /// 0 for advice requests.
    pub turn: u32,
    #[serde(flatten)]
    pub exchange: LlmExchange,
}

#[derive(Debug, Default, Clone)]
pub struct RunOutput {
    pub events: Vec<GameEvent>,
    pub audit: Vec<AuditRecord>,
}

#[derive(Clone)]
pub struct MachineRunner {
    pub factory: PlayerFactory,
    pub clock: Clock,
}

impl MachineRunner {
    pub fn new(factory: PlayerFactory, clock: Clock) -> Self {
        MachineRunner { factory, clock }
    }

    /// Plays machine turns (and machine advice) until the game completes or
    /// a human has to act. Events produced before an error stay in `out`.
    pub fn advance(
        &self,
        state: &mut GameState,
        players: &mut PlayerSet,
        out: &mut RunOutput,
    ) -> Result<(), RunError> {
        let table = self.factory.table.clone();
        while !state.is_complete() {
            if let Some(round) = state.awaiting_advice {
                let descriptor = state.config.player_for_round(round).clone();
                if descriptor.kind.tag() == AgentKindTag::Human {
                    break;
                }
                let history: Vec<ScoredWord> = state
                    .round_guesses(round)
                    .iter()
                    .map(|g| ScoredWord::new(g.word.clone(), g.score))
                    .collect();
                let player = players.get_or_build(&self.factory, &descriptor)?;
                let mut rng = turn_rng(state.config.seed, round, ADVICE_STREAM);
                let advice = player.produce_advice(state.config.channel, &history, &mut rng);
                let exchanges = player.take_exchanges();
                Self::record(state, round, 0, exchanges, out);
                out.events.push(state.submit_advice(&advice?, self.clock.now())?);
                continue;
            }
            let descriptor = state.current_player().clone();
            if descriptor.kind.tag() == AgentKindTag::Human {
                break;
            }
            let obs = state.observe()?;
            let player = players.get_or_build(&self.factory, &descriptor)?;
            let mut rng = turn_rng(state.config.seed, obs.round, obs.turn);
            let guess = player.next_guess(&obs, &mut rng);
            let exchanges = player.take_exchanges();
            Self::record(state, obs.round, obs.turn, exchanges, out);
            let mut raw = guess?;
            if raw.trim().is_empty() {
                // Keep the turn moving; an empty reply scores as out-of-vocabulary.
                raw = "?".into();
            }
            let outcome = state.submit_guess(&table, &raw, &descriptor.agent_id, self.clock.now())?;
            out.events.extend(outcome.events);
        }
        Ok(())
    }

    fn record(
        state: &GameState,
        round: u32,
        turn: u32,
        exchanges: Vec<LlmExchange>,
        out: &mut RunOutput,
    ) {
        out.audit.extend(exchanges.into_iter().map(|exchange| AuditRecord {
            game_id: state.game_id().to_string(),
            round,
            turn,
            exchange,
        }));
    }

    /// Plays a machine-only game from start to finish.
    pub fn play_game(&self, config: GameConfig) -> Result<(GameState, RunOutput), RunError> {
        let (mut state, started) = GameState::start(config, &self.factory.table, self.clock.now())?;
        let mut out = RunOutput {
            events: vec![started],
            audit: Vec::new(),
        };
        let mut players = PlayerSet::default();
        self.advance(&mut state, &mut players, &mut out)?;
        if !state.is_complete() {
            return Err(RunError::Agent(AgentError::HumanSlot));
        }
        Ok((state, out))
    }
}
