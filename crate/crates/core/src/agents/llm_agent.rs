use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::prompt::{render_advice_prompt, render_prompt, TemplatePurpose, TemplateRegistry};
use super::{best_of_round_advice, sanitize_response, AgentError, AgentRng, Player};
use crate::embedding::EmbeddingTable;
use crate::game::{normalize_advice, ChannelKind, Observation, ScoredWord};
use crate::llm::{ChatMessage, ChatProvider, ChatRequest};

/// Attempts per turn before falling back to a random vocabulary draw.
pub const LLM_MAX_ATTEMPTS: u32 = 3;

/// One prompt/response round trip, kept for the audit sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub prompt: String,
    pub raw_response: String,
    pub sanitized_word: Option<String>,
    pub attempt: u32,
    pub model: String,
    pub prompt_hash: String,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Set on the synthetic record written when every attempt failed.
    #[serde(default)]
    pub fallback: bool,
}

pub struct LlmChatAgent {
    table: Arc<EmbeddingTable>,
    provider: Arc<dyn ChatProvider>,
    templates: Arc<TemplateRegistry>,
    model: String,
    template_id: String,
    temperature: Option<f64>,
    exchanges: Vec<LlmExchange>,
}

impl LlmChatAgent {
    pub fn new(
        table: Arc<EmbeddingTable>,
        provider: Arc<dyn ChatProvider>,
        templates: Arc<TemplateRegistry>,
        model: String,
        template_id: String,
        temperature: Option<f64>,
    ) -> Self {
        LlmChatAgent {
            table,
            provider,
            templates,
            model,
            template_id,
            temperature,
            exchanges: Vec::new(),
        }
    }

    fn call(&self, system: &str, prompt: String, attempt: u32, seed: u64) -> LlmExchange {
        let request = ChatRequest {
            model: self.model.clone(),
            messages: vec![ChatMessage::system(system), ChatMessage::user(prompt.clone())],
            temperature: self.temperature,
            seed: Some(seed),
        };
        let start = Instant::now();
        let result = self.provider.complete(&request);
        let latency_ms = start.elapsed().as_millis() as u64;
        let (raw_response, error) = match result {
            Ok(text) => (text, None),
            Err(e) => (String::new(), Some(e.to_string())),
        };
        LlmExchange {
            prompt,
            sanitized_word: None,
            raw_response,
            attempt,
            model: self.model.clone(),
            prompt_hash: request.prompt_hash(),
            latency_ms,
            error,
            fallback: false,
        }
    }

    fn fallback_record(&self, word: &str, attempt: u32) -> LlmExchange {
        LlmExchange {
            prompt: String::new(),
            raw_response: String::new(),
            sanitized_word: Some(word.to_string()),
            attempt,
            model: self.model.clone(),
            prompt_hash: String::new(),
            latency_ms: 0,
            error: None,
            fallback: true,
        }
    }
}

impl Player for LlmChatAgent {
    fn next_guess(&mut self, obs: &Observation, rng: &mut AgentRng) -> Result<String, AgentError> {
        let system = self
            .templates
            .get(&self.template_id, TemplatePurpose::Guess)?
            .system
            .clone();
        let mut this_turn: Vec<LlmExchange> = Vec::new();
        for attempt in 1..=LLM_MAX_ATTEMPTS {
            let prompt = render_prompt(&self.templates, &self.template_id, obs, &this_turn)?;
            let mut ex = self.call(&system, prompt, attempt, rng.next_u64());
            ex.sanitized_word = sanitize_response(&ex.raw_response, &self.table);
            let word = ex.sanitized_word.clone();
            this_turn.push(ex);
            if let Some(w) = word {
                self.exchanges.extend(this_turn);
                return Ok(w);
            }
        }
        let word = self.table.word(rng.random_range(0..self.table.len())).to_string();
        this_turn.push(self.fallback_record(&word, LLM_MAX_ATTEMPTS + 1));
        self.exchanges.extend(this_turn);
        Ok(word)
    }

    fn produce_advice(
        &mut self,
        channel: ChannelKind,
        round_history: &[ScoredWord],
        rng: &mut AgentRng,
    ) -> Result<String, AgentError> {
        let prompt = render_advice_prompt(&self.templates, channel, round_history)?;
        let purpose = match channel {
            ChannelKind::ShortAdvice => TemplatePurpose::ShortAdvice,
            _ => TemplatePurpose::LongAdvice,
        };
        let system = self
            .templates
            .get(
                match purpose {
                    TemplatePurpose::ShortAdvice => super::DEFAULT_SHORT_ADVICE_TEMPLATE,
                    _ => super::DEFAULT_LONG_ADVICE_TEMPLATE,
                },
                purpose,
            )?
            .system
            .clone();
        for attempt in 1..=LLM_MAX_ATTEMPTS {
            let mut ex = self.call(&system, prompt.clone(), attempt, rng.next_u64());
            let advice = if ex.error.is_some() {
                None
            } else {
                match channel {
                    ChannelKind::ShortAdvice => sanitize_response(&ex.raw_response, &self.table),
                    _ => normalize_advice(channel, &ex.raw_response)
                        .ok()
                        .filter(|t| !t.is_empty()),
                }
            };
            ex.sanitized_word = advice.clone();
            self.exchanges.push(ex);
            if let Some(a) = advice {
                return Ok(a);
            }
        }
        let fallback = best_of_round_advice(channel, round_history);
        self.exchanges
            .push(self.fallback_record(&fallback, LLM_MAX_ATTEMPTS + 1));
        Ok(fallback)
    }

    fn take_exchanges(&mut self) -> Vec<LlmExchange> {
        std::mem::take(&mut self.exchanges)
    }
}
