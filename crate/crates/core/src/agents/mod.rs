//! Guess-producing players.
//!
//! An [`AgentDescriptor`] declares who plays a round. Machine descriptors are
//! turned into [`Player`] instances by [`PlayerFactory`]; human rounds are
//! played through the orchestrator instead.

mod forager;
mod llm_agent;
mod prompt;

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::game::{sanitize_guess, ChannelKind, Observation, ScoredWord};
use crate::llm::{ProviderError, ProviderRegistry};
use crate::scoring::best_of;

pub use forager::{HeuristicForager, NeighborCache};
pub use llm_agent::{LlmChatAgent, LlmExchange, LLM_MAX_ATTEMPTS};
pub use prompt::{
    render_advice_prompt, render_prompt, PromptTemplate, TemplatePurpose, TemplateRegistry,
    DEFAULT_GUESS_TEMPLATE, DEFAULT_LONG_ADVICE_TEMPLATE, DEFAULT_SHORT_ADVICE_TEMPLATE,
};

/// Random source handed to agents. Seeded per (game, round, turn).
pub type AgentRng = ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("human players cannot be driven by the engine")]
    HumanSlot,
    #[error("scripted agent {0} ran out of words")]
    ScriptExhausted(String),
    #[error("unknown prompt template {0:?}")]
    UnknownTemplate(String),
    #[error("template {id:?} is a {found:?} template, expected {expected:?}")]
    TemplatePurpose {
        id: String,
        found: TemplatePurpose,
        expected: TemplatePurpose,
    },
    #[error("channel {0:?} does not carry advice")]
    NotAdviceChannel(ChannelKind),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentKind {
    Human,
    LlmChat {
        model: String,
        #[serde(default = "default_template")]
        prompt_template_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        temperature: Option<f64>,
    },
    HeuristicForager {
        explore_prob: f64,
        neighborhood_k: usize,
        candidate_pool_size: usize,
    },
    Random,
    Scripted {
        words: Vec<String>,
    },
}

fn default_template() -> String {
    DEFAULT_GUESS_TEMPLATE.to_string()
}

/// Bare kind label written into guess events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKindTag {
    Human,
    LlmChat,
    HeuristicForager,
    Random,
    Scripted,
}

impl AgentKindTag {
    pub fn is_human(self) -> bool {
        self == AgentKindTag::Human
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKindTag::Human => "human",
            AgentKindTag::LlmChat => "llm_chat",
            AgentKindTag::HeuristicForager => "heuristic_forager",
            AgentKindTag::Random => "random",
            AgentKindTag::Scripted => "scripted",
        }
    }
}

impl AgentKind {
    pub fn tag(&self) -> AgentKindTag {
        match self {
            AgentKind::Human => AgentKindTag::Human,
            AgentKind::LlmChat { .. } => AgentKindTag::LlmChat,
            AgentKind::HeuristicForager { .. } => AgentKindTag::HeuristicForager,
            AgentKind::Random => AgentKindTag::Random,
            AgentKind::Scripted { .. } => AgentKindTag::Scripted,
        }
    }

    pub fn forager(explore_prob: f64, neighborhood_k: usize, candidate_pool_size: usize) -> Self {
        AgentKind::HeuristicForager {
            explore_prob,
            neighborhood_k,
            candidate_pool_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDescriptor {
    pub agent_id: String,
    #[serde(flatten)]
    pub kind: AgentKind,
}

impl AgentDescriptor {
    pub fn new(agent_id: impl Into<String>, kind: AgentKind) -> Self {
        AgentDescriptor {
            agent_id: agent_id.into(),
            kind,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.agent_id.is_empty() {
            return Err("agent_id is empty".into());
        }
        match &self.kind {
            AgentKind::HeuristicForager {
                explore_prob,
                neighborhood_k,
                candidate_pool_size,
            } => {
                if !(0.0..=1.0).contains(explore_prob) {
                    return Err(format!("explore_prob {explore_prob} outside [0, 1]"));
                }
                if *neighborhood_k == 0 || *candidate_pool_size == 0 {
                    return Err("neighborhood_k and candidate_pool_size must be >= 1".into());
                }
            }
            AgentKind::LlmChat {
                model, temperature, ..
            } => {
                if model.is_empty() {
                    return Err("llm model name is empty".into());
                }
                if temperature.is_some_and(|t| !(t.is_finite() && t >= 0.0)) {
                    return Err("temperature must be a non-negative number".into());
                }
            }
            AgentKind::Scripted { words } if words.is_empty() => {
                return Err(format!("scripted agent {} has no words", self.agent_id));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Normalizes a free-text reply into one guess: lowercase, split on
/// whitespace, strip punctuation and quotes around each token, and return the
/// first token the vocabulary knows.
pub fn sanitize_response(raw: &str, table: &EmbeddingTable) -> Option<String> {
    raw.split_whitespace()
        .map(sanitize_guess)
        .find(|t| !t.is_empty() && table.contains(t))
}

/// A machine player bound to one slot of one game.
pub trait Player: Send {
    fn next_guess(&mut self, obs: &Observation, rng: &mut AgentRng) -> Result<String, AgentError>;

    /// Advice for the next round, built from this round's guesses.
    fn produce_advice(
        &mut self,
        channel: ChannelKind,
        round_history: &[ScoredWord],
        rng: &mut AgentRng,
    ) -> Result<String, AgentError>;

    /// LLM exchanges made since the last call.
    fn take_exchanges(&mut self) -> Vec<LlmExchange> {
        Vec::new()
    }
}

/// Advice derived from the best guess of a round; used by non-LLM players and
/// as the LLM fallback.
pub fn best_of_round_advice(channel: ChannelKind, round_history: &[ScoredWord]) -> String {
    let pairs: Vec<(String, f64)> = round_history
        .iter()
        .map(|g| (g.word.clone(), g.score))
        .collect();
    let (word, score) = best_of(&pairs).unwrap_or_default();
    match channel {
        ChannelKind::LongAdvice => format!("{word} was my best guess, scoring {score:.2}."),
        _ => word,
    }
}

/// Uniform draw over the whole vocabulary.
pub struct RandomAgent {
    table: Arc<EmbeddingTable>,
}

impl RandomAgent {
    pub fn new(table: Arc<EmbeddingTable>) -> Self {
        RandomAgent { table }
    }
}

impl Player for RandomAgent {
    fn next_guess(&mut self, _obs: &Observation, rng: &mut AgentRng) -> Result<String, AgentError> {
        Ok(self.table.word(rng.random_range(0..self.table.len())).to_string())
    }

    fn produce_advice(
        &mut self,
        channel: ChannelKind,
        round_history: &[ScoredWord],
        _rng: &mut AgentRng,
    ) -> Result<String, AgentError> {
        Ok(best_of_round_advice(channel, round_history))
    }
}

/// Replays a fixed word list, one word per turn, across every round it plays.
pub struct ScriptedAgent {
    agent_id: String,
    words: Vec<String>,
    next: usize,
}

impl ScriptedAgent {
    pub fn new(agent_id: impl Into<String>, words: Vec<String>) -> Self {
        ScriptedAgent {
            agent_id: agent_id.into(),
            words,
            next: 0,
        }
    }
}

impl Player for ScriptedAgent {
    fn next_guess(&mut self, _obs: &Observation, _rng: &mut AgentRng) -> Result<String, AgentError> {
        let w = self
            .words
            .get(self.next)
            .ok_or_else(|| AgentError::ScriptExhausted(self.agent_id.clone()))?;
        self.next += 1;
        Ok(w.clone())
    }

    fn produce_advice(
        &mut self,
        channel: ChannelKind,
        round_history: &[ScoredWord],
        _rng: &mut AgentRng,
    ) -> Result<String, AgentError> {
        Ok(best_of_round_advice(channel, round_history))
    }
}

/// Builds players for machine descriptors. Shared across games.
#[derive(Clone)]
pub struct PlayerFactory {
    pub table: Arc<EmbeddingTable>,
    pub providers: ProviderRegistry,
    pub templates: Arc<TemplateRegistry>,
    pub neighbors: Arc<NeighborCache>,
}

impl PlayerFactory {
    pub fn new(table: Arc<EmbeddingTable>, providers: ProviderRegistry) -> Self {
        let neighbors = Arc::new(NeighborCache::new(table.clone()));
        PlayerFactory {
            table,
            providers,
            templates: Arc::new(TemplateRegistry::builtin()),
            neighbors,
        }
    }

    pub fn build(&self, descriptor: &AgentDescriptor) -> Result<Box<dyn Player>, AgentError> {
        Ok(match &descriptor.kind {
            AgentKind::Human => return Err(AgentError::HumanSlot),
            AgentKind::Random => Box::new(RandomAgent::new(self.table.clone())),
            AgentKind::Scripted { words } => {
                Box::new(ScriptedAgent::new(descriptor.agent_id.clone(), words.clone()))
            }
            AgentKind::HeuristicForager {
                explore_prob,
                neighborhood_k,
                candidate_pool_size,
            } => Box::new(HeuristicForager::new(
                self.table.clone(),
                self.neighbors.clone(),
                *explore_prob,
                *neighborhood_k,
                *candidate_pool_size,
            )),
            AgentKind::LlmChat {
                model,
                prompt_template_id,
                temperature,
            } => {
                self.templates.get(prompt_template_id, TemplatePurpose::Guess)?;
                Box::new(LlmChatAgent::new(
                    self.table.clone(),
                    self.providers.resolve(model)?,
                    self.templates.clone(),
                    model.clone(),
                    prompt_template_id.clone(),
                    *temperature,
                ))
            }
        })
    }
}

/// Players of one game, keyed by agent id so that an agent playing several
/// rounds keeps its state.
#[derive(Default)]
pub struct PlayerSet {
    players: HashMap<String, Box<dyn Player>>,
}

impl PlayerSet {
    pub fn get_or_build(
        &mut self,
        factory: &PlayerFactory,
        descriptor: &AgentDescriptor,
    ) -> Result<&mut Box<dyn Player>, AgentError> {
        if !self.players.contains_key(&descriptor.agent_id) {
            let p = factory.build(descriptor)?;
            self.players.insert(descriptor.agent_id.clone(), p);
        }
        Ok(self.players.get_mut(&descriptor.agent_id).expect("just inserted"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::SocialSignal;
    use rand::SeedableRng;

    fn table() -> Arc<EmbeddingTable> {
        Arc::new(
            EmbeddingTable::from_rows([
                ("ocean", vec![1.0, 0.0]),
                ("try", vec![0.0, 1.0]),
                ("nautical", vec![0.7, 0.7]),
            ])
            .unwrap(),
        )
    }

    fn obs() -> Observation {
        Observation {
            round: 1,
            turn: 1,
            turns_per_round: 10,
            signal: SocialSignal::None,
            own_round_history: vec![],
        }
    }

    #[test]
    fn sanitize_response_examples() {
        let t = table();
        assert_eq!(sanitize_response("My guess is: Ocean.", &t).as_deref(), Some("ocean"));
        assert_eq!(sanitize_response("ocean", &t).as_deref(), Some("ocean"));
        assert_eq!(sanitize_response("???", &t), None);
        assert_eq!(sanitize_response("\"**Nautical**\"", &t).as_deref(), Some("nautical"));
        assert_eq!(sanitize_response("try nautical things", &t).as_deref(), Some("try"));
    }

    #[test]
    fn scripted_replays_then_exhausts() {
        let mut a = ScriptedAgent::new("s", vec!["a".into(), "b".into()]);
        let mut rng = AgentRng::seed_from_u64(0);
        assert_eq!(a.next_guess(&obs(), &mut rng).unwrap(), "a");
        assert_eq!(a.next_guess(&obs(), &mut rng).unwrap(), "b");
        assert!(matches!(
            a.next_guess(&obs(), &mut rng),
            Err(AgentError::ScriptExhausted(_))
        ));
    }

    #[test]
    fn descriptor_validation() {
        let bad = AgentDescriptor::new("f", AgentKind::forager(1.5, 1, 1));
        assert!(bad.validate().is_err());
        let bad = AgentDescriptor::new("f", AgentKind::forager(0.5, 0, 1));
        assert!(bad.validate().is_err());
        let ok = AgentDescriptor::new("f", AgentKind::forager(0.0, 1, 1));
        assert!(ok.validate().is_ok());
        let empty = AgentDescriptor::new("s", AgentKind::Scripted { words: vec![] });
        assert!(empty.validate().is_err());
    }

    #[test]
    fn descriptor_json_shape() {
        let d = AgentDescriptor::new("f1", AgentKind::forager(0.25, 3, 50));
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["kind"], "heuristic_forager");
        assert_eq!(v["agent_id"], "f1");
        let back: AgentDescriptor = serde_json::from_value(v).unwrap();
        assert_eq!(back, d);
        let llm: AgentDescriptor =
            serde_json::from_str(r#"{"agent_id":"g","kind":"llm_chat","model":"m"}"#).unwrap();
        assert_eq!(
            llm.kind,
            AgentKind::LlmChat {
                model: "m".into(),
                prompt_template_id: DEFAULT_GUESS_TEMPLATE.into(),
                temperature: None
            }
        );
    }

    #[test]
    fn fallback_advice_formats() {
        let hist = vec![ScoredWord::new("boat", 10.0), ScoredWord::new("harbor", 55.5)];
        assert_eq!(best_of_round_advice(ChannelKind::ShortAdvice, &hist), "harbor");
        assert_eq!(
            best_of_round_advice(ChannelKind::LongAdvice, &hist),
            "harbor was my best guess, scoring 55.50."
        );
    }
}
