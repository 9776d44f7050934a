//! Experiment plans: which targets, how many games, and who plays each round.

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentDescriptor, AgentKind};
use crate::game::{ChannelKind, GameConfig, HintMode};
use crate::scoring::DEFAULT_MAX_SCORE;

/// The ten hidden words used by default, spanning common to rare.
pub const DEFAULT_TARGETS: [&str; 10] = [
    "harbor",
    "door",
    "pencil",
    "lantern",
    "river",
    "compass",
    "satellite",
    "metamorphosis",
    "topography",
    "vessel",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// A different human plays each round.
    HumanSocial,
    /// One human plays every round of a game.
    HumanAsocial,
    /// Every round is played by the first machine agent.
    AiOnly,
    /// Rounds split between humans and machines by `mix_ratio`.
    Hybrid,
    /// Rounds alternate through the machine agents.
    HybridAi,
    /// Explicit per-round kinds.
    Custom { roster: Vec<AgentKind> },
}

impl Condition {
    pub fn label(&self) -> &'static str {
        match self {
            Condition::HumanSocial => "human_social",
            Condition::HumanAsocial => "human_asocial",
            Condition::AiOnly => "ai_only",
            Condition::Hybrid => "hybrid",
            Condition::HybridAi => "hybrid_ai",
            Condition::Custom { .. } => "custom",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn default_targets() -> Vec<String> {
    DEFAULT_TARGETS.iter().map(|s| s.to_string()).collect()
}
fn default_games() -> u32 {
    5
}
fn default_ten() -> u32 {
    10
}
fn default_mix() -> f64 {
    0.5
}
fn default_channel() -> ChannelKind {
    ChannelKind::BestGuess
}
fn default_max_score() -> f64 {
    DEFAULT_MAX_SCORE
}
fn default_machines() -> Vec<AgentKind> {
    vec![AgentKind::forager(0.2, 10, 100)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub plan_id: String,
    #[serde(default = "default_targets")]
    pub targets: Vec<String>,
    #[serde(default = "default_games")]
    pub games_per_target: u32,
    pub condition: Condition,
    #[serde(default = "default_channel")]
    pub channel: ChannelKind,
    #[serde(default)]
    pub hint_mode: HintMode,
    /// Fraction of rounds given to humans in the hybrid condition.
    #[serde(default = "default_mix")]
    pub mix_ratio: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ten")]
    pub rounds_per_game: u32,
    #[serde(default = "default_ten")]
    pub turns_per_round: u32,
    /// Machine players, used in order by the machine-bearing conditions.
    #[serde(default = "default_machines")]
    pub machine_agents: Vec<AgentKind>,
    #[serde(default = "default_max_score")]
    pub max_score: f64,
}

impl ExperimentPlan {
    pub fn new(plan_id: impl Into<String>, condition: Condition) -> Self {
        ExperimentPlan {
            plan_id: plan_id.into(),
            targets: default_targets(),
            games_per_target: default_games(),
            condition,
            channel: default_channel(),
            hint_mode: HintMode::default(),
            mix_ratio: default_mix(),
            seed: 0,
            rounds_per_game: default_ten(),
            turns_per_round: default_ten(),
            machine_agents: default_machines(),
            max_score: DEFAULT_MAX_SCORE,
        }
    }

    pub fn total_games(&self) -> usize {
        self.targets.len() * self.games_per_target as usize
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.plan_id.is_empty() || self.plan_id.contains(['/', '\\']) {
            return Err(format!("invalid plan_id {:?}", self.plan_id));
        }
        if self.targets.is_empty() {
            return Err("plan has no targets".into());
        }
        let unique: HashSet<&String> = self.targets.iter().collect();
        if unique.len() != self.targets.len() {
            return Err("targets must be unique".into());
        }
        if self.games_per_target == 0 || self.rounds_per_game == 0 || self.turns_per_round == 0 {
            return Err("games_per_target, rounds_per_game and turns_per_round must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.mix_ratio) {
            return Err(format!("mix_ratio {} outside [0, 1]", self.mix_ratio));
        }
        let needs_machines = matches!(
            self.condition,
            Condition::AiOnly | Condition::HybridAi
        ) || (self.condition == Condition::Hybrid && self.mix_ratio < 1.0);
        if needs_machines && self.machine_agents.is_empty() {
            return Err("condition needs at least one machine agent".into());
        }
        if self.machine_agents.contains(&AgentKind::Human) {
            return Err("machine_agents may not contain human".into());
        }
        if let Condition::Custom { roster } = &self.condition {
            if roster.len() != self.rounds_per_game as usize {
                return Err(format!(
                    "custom roster has {} entries for {} rounds",
                    roster.len(),
                    self.rounds_per_game
                ));
            }
        }
        Ok(())
    }

    /// Seed for game `index` (0-based, plan order).
    pub fn game_seed(&self, index: usize) -> u64 {
        splitmix64(self.seed ^ splitmix64(index as u64 + 1))
    }

    /// Game id for game `index`. Deliberately free of the target word because
    /// ids are shown to players.
    pub fn game_id(&self, index: usize) -> String {
        format!("{}-g{:03}", self.plan_id, index + 1)
    }

    /// One config per game: targets in order, `games_per_target` games each.
    pub fn build_games(&self) -> Result<Vec<GameConfig>, String> {
        self.validate()?;
        let rounds = self.rounds_per_game as usize;
        let human_rounds = self.hybrid_human_rounds();
        let mut games = Vec::with_capacity(self.total_games());
        for (t, target) in self.targets.iter().enumerate() {
            for g in 0..self.games_per_target as usize {
                let index = t * self.games_per_target as usize + g;
                let roster = (0..rounds)
                    .map(|r| self.descriptor(index, r, &human_rounds))
                    .collect();
                games.push(GameConfig {
                    game_id: self.game_id(index),
                    target: target.clone(),
                    rounds_per_game: self.rounds_per_game,
                    turns_per_round: self.turns_per_round,
                    channel: self.channel,
                    hint_mode: self.hint_mode,
                    roster,
                    seed: self.game_seed(index),
                    max_score: self.max_score,
                    condition: Some(self.condition.label().to_string()),
                });
            }
        }
        Ok(games)
    }

    /// Hybrid only: exactly round(mix_ratio * total) rounds, picked by a
    /// seeded shuffle over every (game, round) slot of the plan.
    fn hybrid_human_rounds(&self) -> HashSet<(usize, usize)> {
        if self.condition != Condition::Hybrid {
            return HashSet::new();
        }
        let rounds = self.rounds_per_game as usize;
        let mut slots: Vec<(usize, usize)> = (0..self.total_games())
            .flat_map(|g| (0..rounds).map(move |r| (g, r)))
            .collect();
        let humans = (self.mix_ratio * slots.len() as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ 0x4859_4252_4944));
        slots.shuffle(&mut rng);
        slots.truncate(humans);
        slots.into_iter().collect()
    }

    fn descriptor(
        &self,
        game: usize,
        round: usize,
        hybrid_humans: &HashSet<(usize, usize)>,
    ) -> AgentDescriptor {
        let human = || AgentDescriptor::new(format!("human-r{}", round + 1), AgentKind::Human);
        let machine = |i: usize| {
            let i = i % self.machine_agents.len();
            AgentDescriptor::new(
                format!("m{}-r{}", i, round + 1),
                self.machine_agents[i].clone(),
            )
        };
        match &self.condition {
            Condition::HumanSocial | Condition::HumanAsocial => human(),
            Condition::AiOnly => machine(0),
            Condition::HybridAi => machine(round),
            Condition::Hybrid if hybrid_humans.contains(&(game, round)) => human(),
            Condition::Hybrid => machine(round),
            Condition::Custom { roster } => match &roster[round] {
                AgentKind::Human => human(),
                kind => AgentDescriptor::new(format!("c-r{}", round + 1), kind.clone()),
            },
        }
    }

    /// True when no round needs a human.
    pub fn is_machine_only(&self) -> bool {
        match &self.condition {
            Condition::AiOnly | Condition::HybridAi => true,
            Condition::HumanSocial | Condition::HumanAsocial => false,
            Condition::Hybrid => self.hybrid_human_rounds().is_empty(),
            Condition::Custom { roster } => !roster.contains(&AgentKind::Human),
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentKindTag;

    #[test]
    fn default_plan_shape() {
        let p = ExperimentPlan::new("p", Condition::AiOnly);
        let games = p.build_games().unwrap();
        assert_eq!(games.len(), 50);
        assert_eq!(games.iter().map(|g| g.total_turns()).sum::<usize>(), 5000);
        assert_eq!(games[0].target, "harbor");
        assert_eq!(games[49].target, "vessel");
        assert!(games.iter().all(|g| !g.game_id.contains(&g.target)));
        let seeds: HashSet<u64> = games.iter().map(|g| g.seed).collect();
        assert_eq!(seeds.len(), 50);
    }

    #[test]
    fn hybrid_split_is_exact() {
        let mut p = ExperimentPlan::new("h", Condition::Hybrid);
        p.mix_ratio = 0.5;
        let games = p.build_games().unwrap();
        let humans = games
            .iter()
            .flat_map(|g| &g.roster)
            .filter(|d| d.kind.tag() == AgentKindTag::Human)
            .count();
        assert_eq!(humans, 250);
        assert!(!p.is_machine_only());
    }

    #[test]
    fn hybrid_ai_alternates() {
        let mut p = ExperimentPlan::new("x", Condition::HybridAi);
        p.machine_agents = vec![AgentKind::forager(0.6, 5, 50), AgentKind::forager(0.05, 5, 50)];
        let g = &p.build_games().unwrap()[0];
        assert_eq!(g.roster[0].kind, p.machine_agents[0]);
        assert_eq!(g.roster[1].kind, p.machine_agents[1]);
        assert_eq!(g.roster[2].kind, p.machine_agents[0]);
    }

    #[test]
    fn validation_errors() {
        let mut p = ExperimentPlan::new("p", Condition::Hybrid);
        p.mix_ratio = 1.5;
        assert!(p.validate().is_err());
        let mut p = ExperimentPlan::new("p", Condition::AiOnly);
        p.machine_agents.clear();
        assert!(p.validate().is_err());
        let p = ExperimentPlan::new("p", Condition::Custom { roster: vec![AgentKind::Random] });
        assert!(p.validate().is_err());
        let mut p = ExperimentPlan::new("p", Condition::AiOnly);
        p.games_per_target = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn plan_json_defaults() {
        let p: ExperimentPlan =
            serde_json::from_str(r#"{"plan_id":"a","condition":"human_social"}"#).unwrap();
        assert_eq!(p.games_per_target, 5);
        assert_eq!(p.targets.len(), 10);
        let c: ExperimentPlan = serde_json::from_str(
            r#"{"plan_id":"a","condition":{"custom":{"roster":[{"kind":"random"},{"kind":"human"}]}},"rounds_per_game":2}"#,
        )
        .unwrap();
        assert!(c.validate().is_ok());
        assert!(!c.is_machine_only());
    }
}
