//! Runs experiment plans: assigns human participants to rounds, drives
//! machine rounds, and persists every event before acknowledging it.
//!
//! Locking: each game has its own mutex (one writer per game). Participant
//! bookkeeping lives in a per-experiment registry mutex, always taken before
//! any game lock. Joins only `try_lock` games, so a game busy with machine
//! rounds is simply skipped.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, AgentKindTag, PlayerSet};
use crate::events::GameEvent;
use crate::game::{GameError, GameState, Observation};
use crate::plan::{splitmix64, Condition, ExperimentPlan};
use crate::runner::{AuditRecord, MachineRunner, RunError, RunOutput};
use crate::store::{restore_game, EventStore, RestoreError};

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("plan {0} already exists")]
    DuplicatePlan(String),
    #[error("unknown plan {0}")]
    UnknownPlan(String),
    #[error("unknown game {0}")]
    UnknownGame(String),
    #[error("no open round for participant {0}")]
    NoOpenSlot(String),
    #[error("plan {0} has no rounds left to assign")]
    PlanExhausted(String),
    #[error("unknown or expired session token")]
    UnknownSession,
    #[error("this session's round is not accepting guesses")]
    RoundClosed,
    #[error("turn {got} was already submitted (current turn is {expected})")]
    DuplicateSubmission { expected: u32, got: u32 },
    #[error("plan {0} contains human rounds and cannot be simulated")]
    HumanRoundsInSimulation(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("storage: {0}")]
    Storage(#[from] std::io::Error),
    #[error("restoring from the log: {0}")]
    Restore(#[from] RestoreError),
}

impl From<RunError> for OrchestratorError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Game(g) => OrchestratorError::Game(g),
            RunError::Agent(a) => OrchestratorError::Agent(a),
        }
    }
}

impl OrchestratorError {
    /// Stable machine-readable code for API responses.
    pub fn code(&self) -> &'static str {
        match self {
            OrchestratorError::InvalidPlan(_) => "invalid_plan",
            OrchestratorError::DuplicatePlan(_) => "duplicate_plan",
            OrchestratorError::UnknownPlan(_) => "unknown_plan",
            OrchestratorError::UnknownGame(_) => "unknown_game",
            OrchestratorError::NoOpenSlot(_) => "no_open_slot",
            OrchestratorError::PlanExhausted(_) => "plan_exhausted",
            OrchestratorError::UnknownSession => "unknown_session",
            OrchestratorError::RoundClosed => "round_mismatch",
            OrchestratorError::DuplicateSubmission { .. } => "duplicate_submission",
            OrchestratorError::HumanRoundsInSimulation(_) => "human_rounds_in_simulation",
            OrchestratorError::Game(GameError::EmptyGuess) => "empty_guess",
            OrchestratorError::Game(GameError::MultiTokenAdvice(_)) => "invalid_advice",
            OrchestratorError::Game(GameError::EmptyAdvice) => "invalid_advice",
            OrchestratorError::Game(GameError::AdviceNotDue) => "advice_not_due",
            OrchestratorError::Game(GameError::WrongChannel(_)) => "wrong_channel",
            OrchestratorError::Game(_) => "game_error",
            OrchestratorError::Agent(_) => "agent_error",
            OrchestratorError::Storage(_) | OrchestratorError::Restore(_) => "storage_error",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrchestratorConfig {
    /// Save a snapshot after this many events per game.
    pub snapshot_every: u64,
    /// Release a human assignment that has made no guess for this long.
    pub human_idle_timeout: Option<Duration>,
    /// Run machine rounds inside `post_guess`/`post_advice`/`create_experiment`.
    /// When false the caller must call [`Orchestrator::advance_game`].
    pub inline_machine_rounds: bool,
    /// Parallelism for machine rounds across games.
    pub jobs: usize,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            snapshot_every: 50,
            human_idle_timeout: None,
            inline_machine_rounds: true,
            jobs: 1,
        }
    }
}

struct GameSlot {
    state: GameState,
    players: PlayerSet,
    since_snapshot: u64,
}

#[derive(Default)]
struct Participant {
    targets: HashSet<String>,
    games: HashSet<usize>,
    asocial_game: Option<usize>,
}

struct Registry {
    participants: HashMap<String, Participant>,
    /// Asocial games already bound to a participant.
    bound_games: HashMap<usize, String>,
    /// Active (game, round) -> token.
    assignments: HashMap<(usize, u32), String>,
    rng: ChaCha8Rng,
}

struct Experiment {
    plan: ExperimentPlan,
    games: Vec<Arc<Mutex<GameSlot>>>,
    registry: Mutex<Registry>,
}

#[derive(Debug, Clone)]
struct Session {
    participant_id: String,
    plan_id: String,
    game: usize,
    round: u32,
    last_activity: Instant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Playing,
    AwaitingAdvice,
    Finished,
}

/// Player-facing view of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub token: String,
    pub game_id: String,
    pub round: u32,
    pub status: SessionStatus,
    /// Present while the round is being played.
    pub observation: Option<Observation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessReply {
    pub word: String,
    pub score: f64,
    pub round: u32,
    pub turn: u32,
    pub status: SessionStatus,
    pub observation: Option<Observation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameProgress {
    pub game_id: String,
    pub complete: bool,
    pub current_round: u32,
    pub rounds_complete: u32,
    pub guesses: usize,
    pub waiting_for_human: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub plan_id: String,
    pub condition: String,
    pub games_total: usize,
    pub games_complete: usize,
    pub rounds_total: usize,
    pub rounds_complete: usize,
    pub human_rounds_complete: usize,
    pub machine_rounds_complete: usize,
    pub guesses: usize,
    pub open_human_slots: usize,
    pub games: Vec<GameProgress>,
}

pub struct Orchestrator {
    runner: MachineRunner,
    store: Arc<dyn EventStore>,
    cfg: OrchestratorConfig,
    experiments: RwLock<BTreeMap<String, Arc<Experiment>>>,
    sessions: Mutex<HashMap<String, Session>>,
}

impl Orchestrator {
    pub fn new(runner: MachineRunner, store: Arc<dyn EventStore>, cfg: OrchestratorConfig) -> Self {
        Orchestrator {
            runner,
            store,
            cfg,
            experiments: RwLock::new(BTreeMap::new()),
            sessions: Mutex::new(HashMap::new()),
        }
    }

    /// Reloads every saved plan and rebuilds game states from the store.
    /// Sessions are not persisted; participants rejoin and get their round back.
    pub fn recover(
        runner: MachineRunner,
        store: Arc<dyn EventStore>,
        cfg: OrchestratorConfig,
    ) -> Result<Self, OrchestratorError> {
        let orch = Orchestrator::new(runner, store, cfg);
        for plan in orch.store.plans()? {
            let configs = plan.build_games().map_err(OrchestratorError::InvalidPlan)?;
            let mut games = Vec::with_capacity(configs.len());
            let mut registry = Registry::new(&plan);
            for (idx, config) in configs.into_iter().enumerate() {
                let state = match restore_game(orch.store.as_ref(), &config.game_id)? {
                    Some(s) => s,
                    None => orch.start_game(config)?,
                };
                registry.absorb(&plan, idx, &state);
                games.push(Arc::new(Mutex::new(GameSlot {
                    state,
                    players: PlayerSet::default(),
                    since_snapshot: 0,
                })));
            }
            let exp = Arc::new(Experiment {
                plan: plan.clone(),
                games,
                registry: Mutex::new(registry),
            });
            orch.experiments.write().insert(plan.plan_id.clone(), exp);
            if orch.cfg.inline_machine_rounds {
                orch.advance_all(&plan.plan_id)?;
            }
        }
        Ok(orch)
    }

    fn start_game(&self, config: crate::game::GameConfig) -> Result<GameState, OrchestratorError> {
        let (state, started) = GameState::start(config, &self.runner.factory.table, self.runner.clock.now())?;
        self.store.append(state.game_id(), &[started])?;
        Ok(state)
    }

    pub fn create_experiment(&self, plan: ExperimentPlan) -> Result<String, OrchestratorError> {
        let configs = plan.build_games().map_err(OrchestratorError::InvalidPlan)?;
        for c in &configs {
            c.validate(&self.runner.factory.table)?;
        }
        if self.experiments.read().contains_key(&plan.plan_id) {
            return Err(OrchestratorError::DuplicatePlan(plan.plan_id));
        }
        self.store.save_plan(&plan)?;
        let games = configs
            .into_iter()
            .map(|c| {
                Ok(Arc::new(Mutex::new(GameSlot {
                    state: self.start_game(c)?,
                    players: PlayerSet::default(),
                    since_snapshot: 0,
                })))
            })
            .collect::<Result<Vec<_>, OrchestratorError>>()?;
        let plan_id = plan.plan_id.clone();
        let exp = Arc::new(Experiment {
            registry: Mutex::new(Registry::new(&plan)),
            plan,
            games,
        });
        {
            let mut exps = self.experiments.write();
            if exps.contains_key(&plan_id) {
                return Err(OrchestratorError::DuplicatePlan(plan_id));
            }
            exps.insert(plan_id.clone(), exp);
        }
        if self.cfg.inline_machine_rounds {
            self.advance_all(&plan_id)?;
        }
        Ok(plan_id)
    }

    fn experiment(&self, plan_id: &str) -> Result<Arc<Experiment>, OrchestratorError> {
        self.experiments
            .read()
            .get(plan_id)
            .cloned()
            .ok_or_else(|| OrchestratorError::UnknownPlan(plan_id.to_string()))
    }

    pub fn plan_ids(&self) -> Vec<String> {
        self.experiments.read().keys().cloned().collect()
    }

    /// Runs pending machine rounds in every game of a plan.
    pub fn advance_all(&self, plan_id: &str) -> Result<(), OrchestratorError> {
        let exp = self.experiment(plan_id)?;
        let work = |slot: &Arc<Mutex<GameSlot>>| self.advance_slot(&mut slot.lock());
        if self.cfg.jobs <= 1 {
            exp.games.iter().try_for_each(work)
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.cfg.jobs)
                .build()
                .expect("thread pool");
            pool.install(|| exp.games.par_iter().try_for_each(work))
        }
    }

    /// Runs pending machine rounds of one game.
    pub fn advance_game(&self, game_id: &str) -> Result<(), OrchestratorError> {
        let (exp, idx) = self.find_game(game_id)?;
        let slot = exp.games[idx].clone();
        let mut guard = slot.lock();
        self.advance_slot(&mut guard)
    }

    fn find_game(&self, game_id: &str) -> Result<(Arc<Experiment>, usize), OrchestratorError> {
        for exp in self.experiments.read().values() {
            if let Some(idx) = (0..exp.games.len()).find(|&i| exp.plan.game_id(i) == game_id) {
                return Ok((exp.clone(), idx));
            }
        }
        Err(OrchestratorError::UnknownGame(game_id.to_string()))
    }

    fn advance_slot(&self, slot: &mut GameSlot) -> Result<(), OrchestratorError> {
        let mut out = RunOutput::default();
        let result = self.runner.advance(&mut slot.state, &mut slot.players, &mut out);
        self.persist(slot, &out.events, &out.audit)?;
        result.map_err(Into::into)
    }

    fn persist(
        &self,
        slot: &mut GameSlot,
        events: &[GameEvent],
        audit: &[AuditRecord],
    ) -> Result<(), OrchestratorError> {
        let game_id = slot.state.game_id().to_string();
        self.store.append_audit(&game_id, audit)?;
        self.store.append(&game_id, events)?;
        slot.since_snapshot += events.len() as u64;
        if slot.since_snapshot >= self.cfg.snapshot_every.max(1) {
            self.store.save_snapshot(&slot.state)?;
            slot.since_snapshot = 0;
        }
        Ok(())
    }

    /// Assigns `participant_id` to an open human round (or hands back the
    /// round they already hold) in the given plan, or in any plan.
    pub fn join(
        &self,
        participant_id: &str,
        plan_id: Option<&str>,
    ) -> Result<SessionView, OrchestratorError> {
        if participant_id.trim().is_empty() {
            return Err(OrchestratorError::NoOpenSlot(participant_id.to_string()));
        }
        if let Some(view) = self.existing_session(participant_id, plan_id)? {
            return Ok(view);
        }
        let plans: Vec<Arc<Experiment>> = match plan_id {
            Some(p) => vec![self.experiment(p)?],
            None => self.experiments.read().values().cloned().collect(),
        };
        let mut exhausted = true;
        for exp in plans {
            let mut reg = exp.registry.lock();
            self.expire_idle(&exp, &mut reg);
            let mut open = Vec::new();
            for (idx, slot) in exp.games.iter().enumerate() {
                let Some(game) = slot.try_lock() else {
                    exhausted = false;
                    continue;
                };
                if !game.state.is_complete() {
                    exhausted = false;
                }
                if reg.is_open_for(&exp.plan, idx, &game.state, participant_id) {
                    open.push((idx, game.state.current_round));
                }
            }
            if open.is_empty() {
                continue;
            }
            let (game, round) = open[reg.rng.random_range(0..open.len())];
            let token = new_token();
            reg.bind(&exp.plan, game, round, participant_id, &token);
            drop(reg);
            self.sessions.lock().insert(
                token.clone(),
                Session {
                    participant_id: participant_id.to_string(),
                    plan_id: exp.plan.plan_id.clone(),
                    game,
                    round,
                    last_activity: Instant::now(),
                },
            );
            return self.view(&token);
        }
        match (plan_id, exhausted) {
            (Some(p), true) => Err(OrchestratorError::PlanExhausted(p.to_string())),
            _ => Err(OrchestratorError::NoOpenSlot(participant_id.to_string())),
        }
    }

    fn existing_session(
        &self,
        participant_id: &str,
        plan_id: Option<&str>,
    ) -> Result<Option<SessionView>, OrchestratorError> {
        let tokens: Vec<String> = self
            .sessions
            .lock()
            .iter()
            .filter(|(_, s)| {
                s.participant_id == participant_id && plan_id.is_none_or(|p| p == s.plan_id)
            })
            .map(|(t, _)| t.clone())
            .collect();
        for token in tokens {
            let view = self.view(&token)?;
            if view.status != SessionStatus::Finished {
                return Ok(Some(view));
            }
            self.end_session(&token);
        }
        Ok(None)
    }

    fn expire_idle(&self, exp: &Experiment, reg: &mut Registry) {
        let Some(timeout) = self.cfg.human_idle_timeout else {
            return;
        };
        let mut sessions = self.sessions.lock();
        let stale: Vec<(String, (usize, u32))> = reg
            .assignments
            .iter()
            .filter_map(|(key, token)| {
                let s = sessions.get(token)?;
                let idle = s.last_activity.elapsed() >= timeout;
                let untouched = exp.games[key.0]
                    .try_lock()
                    .is_some_and(|g| g.state.current_round == key.1 && g.state.current_turn == 1);
                (idle && untouched).then(|| (token.clone(), *key))
            })
            .collect();
        for (token, key) in stale {
            sessions.remove(&token);
            reg.release(&exp.plan, key);
        }
    }

    fn session(&self, token: &str) -> Result<Session, OrchestratorError> {
        self.sessions
            .lock()
            .get(token)
            .cloned()
            .ok_or(OrchestratorError::UnknownSession)
    }

    fn end_session(&self, token: &str) {
        if let Some(s) = self.sessions.lock().remove(token) {
            if let Ok(exp) = self.experiment(&s.plan_id) {
                exp.registry.lock().assignments.remove(&(s.game, s.round));
            }
        }
    }

    /// Current view of a session: its observation while playing.
    pub fn view(&self, token: &str) -> Result<SessionView, OrchestratorError> {
        let s = self.session(token)?;
        let exp = self.experiment(&s.plan_id)?;
        let game = exp.games[s.game].lock();
        Ok(session_view(token, &game.state, s.round))
    }

    pub fn observation(&self, token: &str) -> Result<SessionView, OrchestratorError> {
        self.view(token)
    }

    /// Scores a guess for the session's round. `expected_turn`, when given,
    /// must match the turn being played; a retried request is rejected
    /// instead of consuming a second turn.
    pub fn post_guess(
        &self,
        token: &str,
        raw: &str,
        expected_turn: Option<u32>,
    ) -> Result<GuessReply, OrchestratorError> {
        let s = self.session(token)?;
        let exp = self.experiment(&s.plan_id)?;
        let slot = exp.games[s.game].clone();
        let mut game = slot.lock();
        let state = &game.state;
        if state.is_complete() || state.current_round != s.round || state.awaiting_advice.is_some() {
            return Err(OrchestratorError::RoundClosed);
        }
        if let Some(turn) = expected_turn {
            if turn != state.current_turn {
                return Err(OrchestratorError::DuplicateSubmission {
                    expected: state.current_turn,
                    got: turn,
                });
            }
        }
        let turn = state.current_turn;
        let backup = game.state.clone();
        let outcome = game.state.submit_guess(
            &self.runner.factory.table,
            raw,
            &s.participant_id,
            self.runner.clock.now(),
        )?;
        if let Err(e) = self.persist(&mut game, &outcome.events, &[]) {
            game.state = backup;
            return Err(e);
        }
        if let Some(sess) = self.sessions.lock().get_mut(token) {
            sess.last_activity = Instant::now();
        }
        let view = session_view(token, &game.state, s.round);
        if view.status == SessionStatus::Finished {
            drop(game);
            self.end_session(token);
            if self.cfg.inline_machine_rounds {
                self.advance_slot(&mut slot.lock())?;
            }
        }
        Ok(GuessReply {
            word: outcome.word,
            score: outcome.score,
            round: s.round,
            turn,
            status: view.status,
            observation: view.observation,
        })
    }

    /// Records the advice a finished human round passes on.
    pub fn post_advice(&self, token: &str, payload: &str) -> Result<String, OrchestratorError> {
        let s = self.session(token)?;
        let exp = self.experiment(&s.plan_id)?;
        let slot = exp.games[s.game].clone();
        let mut game = slot.lock();
        if game.state.awaiting_advice != Some(s.round) {
            return Err(OrchestratorError::Game(GameError::AdviceNotDue));
        }
        let backup = game.state.clone();
        let event = game.state.submit_advice(payload, self.runner.clock.now())?;
        if let Err(e) = self.persist(&mut game, std::slice::from_ref(&event), &[]) {
            game.state = backup;
            return Err(e);
        }
        let stored = game
            .state
            .advice_chain
            .last()
            .map(|a| a.payload.clone())
            .unwrap_or_default();
        drop(game);
        self.end_session(token);
        if self.cfg.inline_machine_rounds {
            self.advance_slot(&mut slot.lock())?;
        }
        Ok(stored)
    }

    pub fn progress(&self, plan_id: &str) -> Result<Progress, OrchestratorError> {
        let exp = self.experiment(plan_id)?;
        let reg = exp.registry.lock();
        let mut p = Progress {
            plan_id: plan_id.to_string(),
            condition: exp.plan.condition.label().to_string(),
            games_total: exp.games.len(),
            games_complete: 0,
            rounds_total: exp.games.len() * exp.plan.rounds_per_game as usize,
            rounds_complete: 0,
            human_rounds_complete: 0,
            machine_rounds_complete: 0,
            guesses: 0,
            open_human_slots: 0,
            games: Vec::with_capacity(exp.games.len()),
        };
        for (idx, slot) in exp.games.iter().enumerate() {
            let game = slot.lock();
            let st = &game.state;
            let done = st.completed_rounds();
            let humans_done = (1..=done)
                .filter(|&r| st.config.player_for_round(r).kind.tag() == AgentKindTag::Human)
                .count();
            let waiting = !st.is_complete()
                && match st.awaiting_advice {
                    Some(r) => st.config.player_for_round(r).kind.tag().is_human(),
                    None => st.current_player().kind.tag().is_human(),
                };
            if waiting
                && st.awaiting_advice.is_none()
                && !reg.assignments.contains_key(&(idx, st.current_round))
            {
                p.open_human_slots += 1;
            }
            p.games_complete += usize::from(st.is_complete());
            p.rounds_complete += done as usize;
            p.human_rounds_complete += humans_done;
            p.machine_rounds_complete += done as usize - humans_done;
            p.guesses += st.guesses.len();
            p.games.push(GameProgress {
                game_id: st.game_id().to_string(),
                complete: st.is_complete(),
                current_round: st.current_round,
                rounds_complete: done,
                guesses: st.guesses.len(),
                waiting_for_human: waiting,
            });
        }
        Ok(p)
    }

    /// Full event log of a game (operator-facing; includes the hidden word).
    pub fn logs(&self, game_id: &str) -> Result<Vec<GameEvent>, OrchestratorError> {
        self.find_game(game_id)?;
        Ok(self.store.events(game_id)?)
    }

    /// In-memory state of a game.
    pub fn game_state(&self, game_id: &str) -> Result<GameState, OrchestratorError> {
        let (exp, idx) = self.find_game(game_id)?;
        let state = exp.games[idx].lock().state.clone();
        Ok(state)
    }
}

fn session_view(token: &str, state: &GameState, round: u32) -> SessionView {
    let status = if state.awaiting_advice == Some(round) {
        SessionStatus::AwaitingAdvice
    } else if !state.is_complete() && state.current_round == round {
        SessionStatus::Playing
    } else {
        SessionStatus::Finished
    };
    SessionView {
        token: token.to_string(),
        game_id: state.game_id().to_string(),
        round,
        observation: match status {
            SessionStatus::Playing => state.observe().ok(),
            _ => None,
        },
        status,
    }
}

fn new_token() -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

impl Registry {
    fn new(plan: &ExperimentPlan) -> Self {
        Registry {
            participants: HashMap::new(),
            bound_games: HashMap::new(),
            assignments: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(splitmix64(plan.seed ^ 0x4A4F_494E)),
        }
    }

    /// Rebuilds participant history from a restored game.
    fn absorb(&mut self, plan: &ExperimentPlan, idx: usize, state: &GameState) {
        for round in 1..=state.current_round {
            if !state.config.player_for_round(round).kind.tag().is_human() {
                continue;
            }
            if let Some(first) = state.round_guesses(round).first() {
                let p = self.participants.entry(first.agent_id.clone()).or_default();
                p.targets.insert(state.config.target.clone());
                p.games.insert(idx);
                if plan.condition == Condition::HumanAsocial {
                    p.asocial_game = Some(idx);
                    self.bound_games.insert(idx, first.agent_id.clone());
                }
            }
        }
    }

    fn is_open_for(
        &self,
        plan: &ExperimentPlan,
        idx: usize,
        state: &GameState,
        participant: &str,
    ) -> bool {
        if state.is_complete() || state.awaiting_advice.is_some() {
            return false;
        }
        if !state.current_player().kind.tag().is_human() {
            return false;
        }
        if self.assignments.contains_key(&(idx, state.current_round)) {
            return false;
        }
        // A round already started belongs to whoever started it.
        if let Some(owner) = &state.round_player {
            return owner == participant;
        }
        let record = self.participants.get(participant);
        if plan.condition == Condition::HumanAsocial {
            return match record.and_then(|p| p.asocial_game) {
                Some(g) => g == idx,
                None => state.current_round == 1 && !self.bound_games.contains_key(&idx),
            };
        }
        // One round per game and one game per target for each participant.
        !record.is_some_and(|p| p.targets.contains(&state.config.target))
    }

    fn bind(&mut self, plan: &ExperimentPlan, game: usize, round: u32, participant: &str, token: &str) {
        self.assignments.insert((game, round), token.to_string());
        let target = plan.targets[game / plan.games_per_target as usize].clone();
        let p = self.participants.entry(participant.to_string()).or_default();
        p.targets.insert(target);
        p.games.insert(game);
        if plan.condition == Condition::HumanAsocial {
            p.asocial_game = Some(game);
            self.bound_games.insert(game, participant.to_string());
        }
    }

    /// Undoes an assignment that never produced a guess.
    fn release(&mut self, plan: &ExperimentPlan, key: (usize, u32)) {
        self.assignments.remove(&key);
        let target = &plan.targets[key.0 / plan.games_per_target as usize];
        let owner = self
            .participants
            .iter()
            .find(|(_, p)| p.games.contains(&key.0))
            .map(|(id, _)| id.clone());
        if let Some(id) = owner {
            let p = self.participants.get_mut(&id).expect("present");
            let played_elsewhere = p
                .games
                .iter()
                .any(|&g| g != key.0 && plan.targets[g / plan.games_per_target as usize] == *target);
            p.games.remove(&key.0);
            if !played_elsewhere {
                p.targets.remove(target);
            }
            if plan.condition == Condition::HumanAsocial && key.1 == 1 {
                p.asocial_game = None;
                self.bound_games.remove(&key.0);
            }
        }
    }
}

/// Output of one simulated game.
#[derive(Debug, Clone)]
pub struct SimulatedGame {
    pub state: GameState,
    pub events: Vec<GameEvent>,
    pub audit: Vec<AuditRecord>,
}

/// Plays every game of a machine-only plan to completion, up to `jobs`
/// games at a time. Results come back in plan order.
pub fn simulate_plan(
    plan: &ExperimentPlan,
    runner: &MachineRunner,
    jobs: usize,
) -> Result<Vec<SimulatedGame>, OrchestratorError> {
    let configs = plan.build_games().map_err(OrchestratorError::InvalidPlan)?;
    if !plan.is_machine_only() {
        return Err(OrchestratorError::HumanRoundsInSimulation(plan.plan_id.clone()));
    }
    let play = |config| -> Result<SimulatedGame, OrchestratorError> {
        let (state, out) = runner.play_game(config)?;
        Ok(SimulatedGame {
            state,
            events: out.events,
            audit: out.audit,
        })
    };
    if jobs <= 1 {
        return configs.into_iter().map(play).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    pool.install(|| configs.into_par_iter().map(play).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentKind, PlayerFactory};
    use crate::embedding::EmbeddingTable;
    use crate::llm::ProviderRegistry;
    use crate::runner::Clock;
    use crate::store::MemoryStore;

    fn table() -> Arc<EmbeddingTable> {
        let words = ["harbor", "door", "boat", "ship", "river", "lake", "pen", "ink"];
        Arc::new(
            EmbeddingTable::from_rows(words.iter().enumerate().map(|(i, w)| {
                let a = i as f32 * 0.4;
                (*w, vec![a.cos(), a.sin(), 0.2])
            }))
            .unwrap(),
        )
    }

    fn orch(store: Arc<dyn EventStore>) -> Orchestrator {
        let runner = MachineRunner::new(
            PlayerFactory::new(table(), ProviderRegistry::new()),
            Clock::zero(),
        );
        Orchestrator::new(runner, store, OrchestratorConfig::default())
    }

    fn small_plan(id: &str, condition: Condition) -> ExperimentPlan {
        let mut p = ExperimentPlan::new(id, condition);
        p.targets = vec!["harbor".into(), "door".into()];
        p.games_per_target = 2;
        p.rounds_per_game = 3;
        p.turns_per_round = 2;
        p.machine_agents = vec![AgentKind::forager(0.3, 2, 4)];
        p
    }

    fn play_round(o: &Orchestrator, token: &str) -> GuessReply {
        let mut last = None;
        for w in ["boat", "ship"] {
            last = Some(o.post_guess(token, w, None).unwrap());
        }
        last.unwrap()
    }

    #[test]
    fn social_participant_gets_one_round_per_target() {
        let o = orch(Arc::new(MemoryStore::new()));
        o.create_experiment(small_plan("s", Condition::HumanSocial)).unwrap();
        let a = o.join("alice", Some("s")).unwrap();
        // Rejoining while holding a round returns the same assignment.
        assert_eq!(o.join("alice", Some("s")).unwrap().token, a.token);
        let first_target = o.game_state(&a.game_id).unwrap().config.target;
        play_round(&o, &a.token);
        let b = o.join("alice", Some("s")).unwrap();
        let second_target = o.game_state(&b.game_id).unwrap().config.target;
        assert_ne!(first_target, second_target);
        play_round(&o, &b.token);
        assert!(matches!(
            o.join("alice", Some("s")),
            Err(OrchestratorError::NoOpenSlot(_))
        ));
    }

    #[test]
    fn asocial_participant_plays_every_round_of_one_game() {
        let o = orch(Arc::new(MemoryStore::new()));
        o.create_experiment(small_plan("a", Condition::HumanAsocial)).unwrap();
        let first = o.join("bob", Some("a")).unwrap();
        for round in 1..=3 {
            let v = o.join("bob", Some("a")).unwrap();
            assert_eq!(v.game_id, first.game_id);
            assert_eq!(v.round, round);
            let other = o.join("carol", Some("a")).unwrap();
            assert_ne!(other.game_id, first.game_id);
            play_round(&o, &v.token);
        }
        assert!(o.game_state(&first.game_id).unwrap().is_complete());
        assert!(matches!(
            o.join("bob", Some("a")),
            Err(OrchestratorError::NoOpenSlot(_))
        ));
    }

    #[test]
    fn token_only_opens_its_round() {
        let o = orch(Arc::new(MemoryStore::new()));
        o.create_experiment(small_plan("t", Condition::HumanSocial)).unwrap();
        let v = o.join("dave", Some("t")).unwrap();
        assert!(matches!(o.post_guess("bogus", "boat", None), Err(OrchestratorError::UnknownSession)));
        o.post_guess(&v.token, "boat", Some(1)).unwrap();
        assert!(matches!(
            o.post_guess(&v.token, "boat", Some(1)),
            Err(OrchestratorError::DuplicateSubmission { expected: 2, got: 1 })
        ));
        let r = o.post_guess(&v.token, "ship", Some(2)).unwrap();
        assert_eq!(r.status, SessionStatus::Finished);
        assert!(matches!(
            o.post_guess(&v.token, "lake", None),
            Err(OrchestratorError::UnknownSession)
        ));
    }

    #[test]
    fn hybrid_machine_rounds_run_eagerly() {
        let o = orch(Arc::new(MemoryStore::new()));
        let mut p = small_plan("h", Condition::Hybrid);
        p.mix_ratio = 0.5;
        o.create_experiment(p).unwrap();
        let prog = o.progress("h").unwrap();
        assert!(prog.machine_rounds_complete > 0);
        // Keep joining with fresh participants until every human round is played.
        let mut n = 0;
        while let Ok(v) = o.join(&format!("p{n}"), Some("h")) {
            play_round(&o, &v.token);
            n += 1;
        }
        let prog = o.progress("h").unwrap();
        assert_eq!(prog.games_complete, 4);
        assert_eq!(prog.human_rounds_complete, 6);
        assert_eq!(prog.machine_rounds_complete, 6);
        assert!(matches!(o.join("late", Some("h")), Err(OrchestratorError::PlanExhausted(_))));
    }

    #[test]
    fn human_advice_round_trip() {
        let o = orch(Arc::new(MemoryStore::new()));
        let mut p = small_plan("adv", Condition::HumanSocial);
        p.channel = crate::game::ChannelKind::ShortAdvice;
        o.create_experiment(p).unwrap();
        let v = o.join("erin", Some("adv")).unwrap();
        let r = play_round(&o, &v.token);
        assert_eq!(r.status, SessionStatus::AwaitingAdvice);
        // The next round is not open until advice arrives.
        let other = o.join("frank", Some("adv")).unwrap();
        assert_ne!(other.game_id, v.game_id);
        assert!(o.post_advice(&v.token, "two words").is_err());
        assert_eq!(o.post_advice(&v.token, "Nautical!").unwrap(), "nautical");
        assert!(matches!(o.post_advice(&v.token, "x"), Err(OrchestratorError::UnknownSession)));
        let st = o.game_state(&v.game_id).unwrap();
        assert_eq!(
            st.observe().unwrap().signal,
            crate::game::SocialSignal::ShortAdvice { word: "nautical".into() }
        );
    }

    #[test]
    fn recovery_rebuilds_state_and_participants() {
        let store: Arc<dyn EventStore> = Arc::new(MemoryStore::new());
        let o = orch(store.clone());
        o.create_experiment(small_plan("r", Condition::HumanSocial)).unwrap();
        let v = o.join("gina", Some("r")).unwrap();
        o.post_guess(&v.token, "boat", None).unwrap();
        let before = o.game_state(&v.game_id).unwrap();

        let runner = MachineRunner::new(
            PlayerFactory::new(table(), ProviderRegistry::new()),
            Clock::zero(),
        );
        let o2 = Orchestrator::recover(runner, store, OrchestratorConfig::default()).unwrap();
        assert_eq!(o2.game_state(&v.game_id).unwrap(), before);
        // The half-played round goes back to the participant who started it.
        let again = o2.join("gina", Some("r")).unwrap();
        assert_eq!(again.game_id, v.game_id);
        assert_eq!(again.observation.unwrap().turn, 2);
    }

    #[test]
    fn simulate_rejects_human_plans() {
        let runner = MachineRunner::new(
            PlayerFactory::new(table(), ProviderRegistry::new()),
            Clock::zero(),
        );
        assert!(matches!(
            simulate_plan(&small_plan("x", Condition::HumanSocial), &runner, 1),
            Err(OrchestratorError::HumanRoundsInSimulation(_))
        ));
        let games = simulate_plan(&small_plan("y", Condition::AiOnly), &runner, 2).unwrap();
        assert_eq!(games.len(), 4);
        assert!(games.iter().all(|g| g.state.is_complete()));
    }
}
