use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use parking_lot::Mutex;
use rand::seq::index;
use rand::Rng;

use super::{best_of_round_advice, sanitize_response, AgentError, AgentRng, Player};
use crate::embedding::EmbeddingTable;
use crate::game::{ChannelKind, Observation, ScoredWord, SocialSignal};

const CACHE_LIMIT: usize = 100_000;

type NeighborList = Arc<Vec<(String, f64)>>;

/// Memoized nearest-neighbor lists, shared by every forager over one table.
pub struct NeighborCache {
    table: Arc<EmbeddingTable>,
    lists: Mutex<HashMap<String, NeighborList>>,
}

impl NeighborCache {
    pub fn new(table: Arc<EmbeddingTable>) -> Self {
        NeighborCache {
            table,
            lists: Mutex::new(HashMap::new()),
        }
    }

    /// At least `k` nearest neighbors of `word` (fewer only if the table is
    /// smaller), sorted as [`EmbeddingTable::nearest_neighbors`] sorts them.
    pub fn neighbors(&self, word: &str, k: usize) -> NeighborList {
        let available = self.table.len().saturating_sub(1);
        if let Some(hit) = self.lists.lock().get(word) {
            if hit.len() >= k.min(available) {
                return hit.clone();
            }
        }
        // Fetch with some headroom so that growing exclusion sets rarely miss.
        let fetch = (k * 2).max(32).min(available);
        let list = Arc::new(
            self.table
                .nearest_neighbors(word, fetch, &HashSet::new())
                .unwrap_or_default(),
        );
        let mut lists = self.lists.lock();
        if lists.len() >= CACHE_LIMIT {
            lists.clear();
        }
        lists.insert(word.to_string(), list.clone());
        list
    }
}

/// Explore/exploit searcher over the embedding space.
///
/// With probability `explore_prob` it draws from a fresh random pool of
/// `candidate_pool_size` words; otherwise it draws from the
/// `neighborhood_k` nearest neighbors of its anchor, the best-scoring word
/// it knows of this round (the incoming signal or one of its own guesses).
/// It never repeats its own guesses within a round.
pub struct HeuristicForager {
    table: Arc<EmbeddingTable>,
    cache: Arc<NeighborCache>,
    explore_prob: f64,
    neighborhood_k: usize,
    candidate_pool_size: usize,
}

impl HeuristicForager {
    pub fn new(
        table: Arc<EmbeddingTable>,
        cache: Arc<NeighborCache>,
        explore_prob: f64,
        neighborhood_k: usize,
        candidate_pool_size: usize,
    ) -> Self {
        HeuristicForager {
            table,
            cache,
            explore_prob,
            neighborhood_k: neighborhood_k.max(1),
            candidate_pool_size: candidate_pool_size.max(1),
        }
    }

    /// Best-scoring in-vocabulary word known this round. Signal words without
    /// a score lose to any scored guess; ties keep the earlier candidate.
    pub fn anchor(&self, obs: &Observation) -> Option<String> {
        let mut candidates: Vec<(String, f64)> = Vec::new();
        match &obs.signal {
            SocialSignal::None => {}
            SocialSignal::BestGuess { word, score } => candidates.push((word.clone(), *score)),
            SocialSignal::FullHistory { guesses } => candidates.extend(
                guesses
                    .iter()
                    .map(|g| (g.word.clone(), g.score)),
            ),
            SocialSignal::ShortAdvice { word } => {
                candidates.push((word.clone(), f64::NEG_INFINITY))
            }
            SocialSignal::LongAdvice { text } => {
                if let Some(w) = sanitize_response(text, &self.table) {
                    candidates.push((w, f64::NEG_INFINITY));
                }
            }
        }
        candidates.extend(
            obs.own_round_history
                .iter()
                .map(|g| (g.word.clone(), g.score)),
        );
        let mut best: Option<(String, f64)> = None;
        for (w, s) in candidates {
            if !self.table.contains(&w) {
                continue;
            }
            if best.as_ref().is_none_or(|b| s > b.1) {
                best = Some((w, s));
            }
        }
        best.map(|b| b.0)
    }

    fn exploit(&self, anchor: &str, guessed: &HashSet<&str>, rng: &mut AgentRng) -> Option<String> {
        let want = self.neighborhood_k + guessed.len();
        let list = self.cache.neighbors(anchor, want);
        let pool: Vec<&String> = list
            .iter()
            .map(|(w, _)| w)
            .filter(|w| !guessed.contains(w.as_str()))
            .take(self.neighborhood_k)
            .collect();
        if pool.is_empty() {
            return None;
        }
        Some(pool[rng.random_range(0..pool.len())].clone())
    }

    fn explore(&self, guessed: &HashSet<&str>, rng: &mut AgentRng) -> String {
        let n = self.table.len();
        let size = self.candidate_pool_size.min(n);
        for _ in 0..8 {
            let pool: Vec<usize> = index::sample(rng, n, size)
                .into_iter()
                .filter(|&r| !guessed.contains(self.table.word(r)))
                .collect();
            if !pool.is_empty() {
                return self.table.word(pool[rng.random_range(0..pool.len())]).to_string();
            }
        }
        // Tiny vocabularies: take the first unused word, or repeat if none is left.
        self.table
            .words()
            .iter()
            .find(|w| !guessed.contains(w.as_str()))
            .unwrap_or(&self.table.words()[0])
            .clone()
    }
}

impl Player for HeuristicForager {
    fn next_guess(&mut self, obs: &Observation, rng: &mut AgentRng) -> Result<String, AgentError> {
        let guessed: HashSet<&str> = obs.own_round_history.iter().map(|g| g.word.as_str()).collect();
        let coin: f64 = rng.random();
        let choice = match self.anchor(obs) {
            Some(anchor) if coin >= self.explore_prob => self.exploit(&anchor, &guessed, rng),
            _ => None,
        };
        Ok(choice.unwrap_or_else(|| self.explore(&guessed, rng)))
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
