//! Versioned prompt templates for chat agents.
//!
//! The guess prompt carries the same instruction human players see, the
//! incoming social signal, the agent's own guesses this round and the turn
//! counter. It never mentions the hidden word or the maximum score.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{AgentError, LlmExchange};
use crate::game::{ChannelKind, Observation, ScoredWord, SocialSignal};

pub const DEFAULT_GUESS_TEMPLATE: &str = "guess-v1";
pub const DEFAULT_SHORT_ADVICE_TEMPLATE: &str = "advice-short-v1";
pub const DEFAULT_LONG_ADVICE_TEMPLATE: &str = "advice-long-v1";

/// Instruction shown to every player.
pub const GUESS_INSTRUCTION: &str = "Please enter your one-word guess";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplatePurpose {
    Guess,
    ShortAdvice,
    LongAdvice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub purpose: TemplatePurpose,
    /// System message sent ahead of the rendered prompt.
    pub system: String,
    /// Opening paragraph describing the game.
    pub intro: String,
    /// Closing request.
    pub instruction: String,
}

#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, PromptTemplate>,
}

const INTRO: &str = "You are playing a word-guessing game. There is a hidden target word. \
Each guess receives a similarity score: the closer your guess is in meaning to the hidden word, \
the higher the score.";

impl TemplateRegistry {
    pub fn builtin() -> Self {
        let mut r = TemplateRegistry {
            templates: BTreeMap::new(),
        };
        r.insert(PromptTemplate {
            id: DEFAULT_GUESS_TEMPLATE.into(),
            purpose: TemplatePurpose::Guess,
            system: "You are a player in a word game. Answer with exactly one English word.".into(),
            intro: INTRO.into(),
            instruction: format!("{GUESS_INSTRUCTION}."),
        });
        r.insert(PromptTemplate {
            id: DEFAULT_SHORT_ADVICE_TEMPLATE.into(),
            purpose: TemplatePurpose::ShortAdvice,
            system: "You are a player in a word game. Answer with exactly one English word.".into(),
            intro: INTRO.into(),
            instruction: "Your round is over. Give the next player a single word of advice \
                          to help them find the hidden word. Reply with one word only."
                .into(),
        });
        r.insert(PromptTemplate {
            id: DEFAULT_LONG_ADVICE_TEMPLATE.into(),
            purpose: TemplatePurpose::LongAdvice,
            system: "You are a player in a word game.".into(),
            intro: INTRO.into(),
            instruction: "Your round is over. Write a few sentences of advice for the next \
                          player to help them find the hidden word."
                .into(),
        });
        r
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert(template.id.clone(), template);
    }

    pub fn get(&self, id: &str, purpose: TemplatePurpose) -> Result<&PromptTemplate, AgentError> {
        let t = self
            .templates
            .get(id)
            .ok_or_else(|| AgentError::UnknownTemplate(id.to_string()))?;
        if t.purpose != purpose {
            return Err(AgentError::TemplatePurpose {
                id: id.to_string(),
                found: t.purpose,
                expected: purpose,
            });
        }
        Ok(t)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

fn write_signal(out: &mut String, signal: &SocialSignal) {
    match signal {
        SocialSignal::None => {}
        SocialSignal::BestGuess { word, score } => {
            let _ = writeln!(
                out,
                "Hint: the best guess from previous players was \"{word}\" with a score of {score:.2}.\n"
            );
        }
        SocialSignal::FullHistory { guesses } => {
            out.push_str("Hint: here is the complete guessing history of previous players, in order:\n");
            for g in guesses {
                let _ = writeln!(
                    out,
                    "- round {} turn {}: \"{}\" scored {:.2}",
                    g.round, g.turn, g.word, g.score
                );
            }
            out.push('\n');
        }
        SocialSignal::ShortAdvice { word } => {
            let _ = writeln!(
                out,
                "Hint: the previous player left you one word of advice: \"{word}\".\n"
            );
        }
        SocialSignal::LongAdvice { text } => {
            let _ = writeln!(out, "Hint: the previous player left you this advice:\n\"\"\"\n{text}\n\"\"\"\n");
        }
    }
}

fn write_own_history(out: &mut String, history: &[ScoredWord]) {
    if history.is_empty() {
        return;
    }
    out.push_str("Your guesses so far this round:\n");
    for (i, g) in history.iter().enumerate() {
        let _ = writeln!(out, "{}. \"{}\" scored {:.2}", i + 1, g.word, g.score);
    }
    out.push('\n');
}

/// Renders a guess prompt. `history` holds the earlier attempts for this
/// same turn whose replies could not be used.
pub fn render_prompt(
    registry: &TemplateRegistry,
    template_id: &str,
    obs: &Observation,
    history: &[LlmExchange],
) -> Result<String, AgentError> {
    let t = registry.get(template_id, TemplatePurpose::Guess)?;
    let mut out = String::new();
    out.push_str(&t.intro);
    out.push_str("\n\n");
    write_signal(&mut out, &obs.signal);
    write_own_history(&mut out, &obs.own_round_history);
    let _ = writeln!(out, "This is turn {} of {}.", obs.turn, obs.turns_per_round);
    if let Some(last) = history.last() {
        let _ = writeln!(
            out,
            "Your previous reply ({:?}) did not contain a recognized English word.",
            crate::game::truncate_chars(&last.raw_response, 80)
        );
    }
    out.push_str(&t.instruction);
    Ok(out)
}

pub fn render_advice_prompt(
    registry: &TemplateRegistry,
    channel: ChannelKind,
    round_history: &[ScoredWord],
) -> Result<String, AgentError> {
    let (id, purpose) = match channel {
        ChannelKind::ShortAdvice => (DEFAULT_SHORT_ADVICE_TEMPLATE, TemplatePurpose::ShortAdvice),
        ChannelKind::LongAdvice => (DEFAULT_LONG_ADVICE_TEMPLATE, TemplatePurpose::LongAdvice),
        other => return Err(AgentError::NotAdviceChannel(other)),
    };
    let t = registry.get(id, purpose)?;
    let mut out = String::new();
    out.push_str(&t.intro);
    out.push_str("\n\n");
    write_own_history(&mut out, round_history);
    out.push_str(&t.instruction);
    Ok(out)
}
