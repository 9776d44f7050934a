//! Performance, diversity and lexical measures computed from game logs.
//!
//! Every metric works on [`GameRecord`]s rebuilt from event logs and an
//! [`EmbeddingTable`] for vectors. Scores come from the log; only diversity
//! and centroids need vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::events::GameEvent;
use crate::game::{ChannelKind, GameError, GameState};
use crate::stats::{bh_fdr, cohen_d, mean, pearson_r, summarize, welch_t, Summary};

/// Label used for rows that pool every target of a condition.
pub const ALL_TARGETS: &str = "ALL";

/// Above this many distinct words, diversity uses the vector-sum identity
/// instead of enumerating pairs.
const PAIRWISE_LIMIT: usize = 4096;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no games to analyze")]
    Empty,
    #[error("log {index}: {source}")]
    BadLog { index: usize, source: GameError },
    #[error("log {0} has no game_started event")]
    NoStart(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// How out-of-vocabulary guesses enter embedding-based diversity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    /// Dropped; they have no vector.
    #[default]
    Exclude,
    /// Kept, with similarity 0 to every other word and 1 to copies of itself.
    Orthogonal,
}

/// Unit over which the individual-performance standard error is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeUnit {
    #[default]
    Round,
    /// Rounds are first averaged per player id.
    Participant,
}

/// How games are grouped into conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    /// Condition label, suffixed with the channel when it is not best-guess.
    #[default]
    Condition,
    /// Plan id (the game id without its `-gNNN` suffix).
    Plan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsOptions {
    pub oov: OovPolicy,
    pub se_unit: SeUnit,
    pub group_by: GroupBy,
    /// False discovery rate for the pairwise tests.
    pub fdr_q: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            oov: OovPolicy::Exclude,
            se_unit: SeUnit::Round,
            group_by: GroupBy::Condition,
            fdr_q: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessRecord {
    pub round: u32,
    pub turn: u32,
    pub word: String,
    pub score: f64,
    pub player: String,
    /// Human ids name a participant across games; machine ids are per game.
    #[serde(default)]
    pub human: bool,
}

/// The analysis view of one game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub game_id: String,
    pub target: String,
    pub condition: String,
    pub channel: ChannelKind,
    pub rounds_per_game: u32,
    pub guesses: Vec<GuessRecord>,
}

impl GameRecord {
    pub fn from_state(state: &GameState) -> Self {
        let cfg = &state.config;
        GameRecord {
            game_id: cfg.game_id.clone(),
            target: cfg.target.clone(),
            condition: cfg.condition.clone().unwrap_or_else(|| "unlabeled".into()),
            channel: cfg.channel,
            rounds_per_game: cfg.rounds_per_game,
            guesses: state
                .guesses
                .iter()
                .map(|g| GuessRecord {
                    round: g.round,
                    turn: g.turn,
                    word: g.word.clone(),
                    score: g.score,
                    player: g.agent_id.clone(),
                    human: g.agent_kind.is_human(),
                })
                .collect(),
        }
    }

    /// Replays a log, validating it, and keeps what analysis needs.
    pub fn from_events(events: &[GameEvent]) -> Result<Self, GameError> {
        Ok(Self::from_state(&GameState::replay(events)?))
    }

    pub fn plan_id(&self) -> &str {
        match self.game_id.rfind("-g") {
            Some(i) if self.game_id[i + 2..].bytes().all(|b| b.is_ascii_digit()) => &self.game_id[..i],
            _ => &self.game_id,
        }
    }

    fn group(&self, by: GroupBy) -> String {
        match by {
            GroupBy::Plan => self.plan_id().to_string(),
            GroupBy::Condition if self.channel == ChannelKind::BestGuess => self.condition.clone(),
            GroupBy::Condition => {
                let ch = serde_json::to_value(self.channel).ok();
                let ch = ch.as_ref().and_then(|v| v.as_str()).unwrap_or("channel");
                format!("{}/{}", self.condition, ch)
            }
        }
    }

    /// Rounds that have at least one guess, in order.
    pub fn rounds(&self) -> Vec<u32> {
        self.guesses.iter().map(|g| g.round).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn round_guesses(&self, round: u32) -> impl Iterator<Item = &GuessRecord> {
        self.guesses.iter().filter(move |g| g.round == round)
    }
}

/// Builds records from a set of logs, one log per game.
pub fn records_from_logs(logs: &[Vec<GameEvent>]) -> Result<Vec<GameRecord>, MetricsError> {
    logs.iter()
        .enumerate()
        .map(|(index, events)| {
            if events.is_empty() {
                return Err(MetricsError::NoStart(index));
            }
            GameRecord::from_events(events).map_err(|source| MetricsError::BadLog { index, source })
        })
        .collect()
}

/// Maximum score of each played round, in round order. An all-OOV round scores 0.
pub fn round_maxima(game: &GameRecord) -> Vec<(u32, f64)> {
    let mut best: BTreeMap<u32, f64> = BTreeMap::new();
    for g in &game.guesses {
        let e = best.entry(g.round).or_insert(f64::NEG_INFINITY);
        *e = e.max(g.score);
    }
    best.into_iter().collect()
}

/// Highest score anywhere in the game, or None for a game without guesses.
pub fn game_max(game: &GameRecord) -> Option<f64> {
    game.guesses.iter().map(|g| g.score).reduce(f64::max)
}

/// Mean of per-round maxima. The spread is over rounds, or over players
/// (each averaged first) with [`SeUnit::Participant`].
pub fn individual_performance(games: &[&GameRecord], unit: SeUnit) -> Option<Summary> {
    match unit {
        SeUnit::Round => {
            let values: Vec<f64> = games.iter().flat_map(|g| round_maxima(g)).map(|(_, s)| s).collect();
            summarize(&values)
        }
        SeUnit::Participant => {
            let mut per: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for g in games {
                for (round, s) in round_maxima(g) {
                    let key = match g.round_guesses(round).next() {
                        Some(x) if x.human => x.player.clone(),
                        Some(x) => format!("{}/{}", g.game_id, x.player),
                        None => continue,
                    };
                    per.entry(key).or_default().push(s);
                }
            }
            let values: Vec<f64> = per.values().filter_map(|v| mean(v)).collect();
            summarize(&values)
        }
    }
}

/// Mean over games of each game's maximum score.
pub fn collective_performance(games: &[&GameRecord]) -> Option<Summary> {
    let values: Vec<f64> = games.iter().filter_map(|g| game_max(g)).collect();
    summarize(&values)
}

/// One minus the mean cosine over all unordered pairs of `words`.
/// Duplicates count as similarity 1. None when fewer than two words are
/// eligible under `policy`.
pub fn pairwise_diversity<S: AsRef<str>>(
    table: &EmbeddingTable,
    words: &[S],
    policy: OovPolicy,
) -> Option<f64> {
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut oov: HashMap<&str, u64> = HashMap::new();
    for w in words {
        match table.row_of(w.as_ref()) {
            Some(r) => *rows.entry(r).or_default() += 1,
            None if policy == OovPolicy::Orthogonal => *oov.entry(w.as_ref()).or_default() += 1,
            None => {}
        }
    }
    let n: u64 = rows.values().sum::<u64>() + oov.values().sum::<u64>();
    if n < 2 {
        return None;
    }
    let mut rows: Vec<(usize, u64)> = rows.into_iter().collect();
    rows.sort_unstable();
    // Sum of cosines over unordered pairs.
    let mut total = if rows.len() <= PAIRWISE_LIMIT {
        distinct_pair_sum(table, &rows)
    } else {
        vector_sum_pair_sum(table, &rows)
    };
    for &c in rows.iter().map(|(_, c)| c).chain(oov.values()) {
        total += (c * (c - 1) / 2) as f64;
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Some((1.0 - total / pairs).clamp(0.0, 2.0))
}

/// Cross-word pair sum, enumerating distinct rows.
fn distinct_pair_sum(table: &EmbeddingTable, rows: &[(usize, u64)]) -> f64 {
    let mut total = 0.0;
    for (i, &(a, ca)) in rows.iter().enumerate() {
        for &(b, cb) in &rows[i + 1..] {
            total += (ca * cb) as f64 * table.cosine_rows(a, b);
        }
    }
    total
}

/// Cross-word pair sum from ‖Σ cᵢuᵢ‖² − Σ cᵢ²‖uᵢ‖², halved.
fn vector_sum_pair_sum(table: &EmbeddingTable, rows: &[(usize, u64)]) -> f64 {
    let mut sum = vec![0.0f64; table.dim()];
    let mut self_terms = 0.0;
    for &(r, c) in rows {
        let u = table.unit_vector(r);
        let c = c as f64;
        self_terms += c * c * u.iter().map(|x| x * x).sum::<f64>();
        for (s, x) in sum.iter_mut().zip(&u) {
            *s += c * x;
        }
    }
    (sum.iter().map(|x| x * x).sum::<f64>() - self_terms) / 2.0
}

/// Diversity of each round's guesses, in round order; None marks rounds
/// with too few eligible words.
pub fn individual_diversity(table: &EmbeddingTable, game: &GameRecord, policy: OovPolicy) -> Vec<(u32, Option<f64>)> {
    game.rounds()
        .into_iter()
        .map(|r| {
            let words: Vec<&str> = game.round_guesses(r).map(|g| g.word.as_str()).collect();
            (r, pairwise_diversity(table, &words, policy))
        })
        .collect()
}

/// Diversity of every guess pooled across the given games.
pub fn collective_diversity(table: &EmbeddingTable, games: &[&GameRecord], policy: OovPolicy) -> Option<f64> {
    let words: Vec<&str> = games
        .iter()
        .flat_map(|g| g.guesses.iter().map(|x| x.word.as_str()))
        .collect();
    pairwise_diversity(table, &words, policy)
}

/// Unique words over total guesses; OOV guesses count.
pub fn lexical_diversity<S: AsRef<str>>(words: &[S]) -> Option<f64> {
    if words.is_empty() {
        return None;
    }
    let unique: BTreeSet<&str> = words.iter().map(|w| w.as_ref()).collect();
    Some(unique.len() as f64 / words.len() as f64)
}

/// Per-round summary of round maxima across games, for rounds 1..=rounds.
pub fn performance_by_round(games: &[&GameRecord], rounds: u32) -> Vec<Option<Summary>> {
    let mut by_round: Vec<Vec<f64>> = vec![Vec::new(); rounds as usize];
    for g in games {
        for (r, s) in round_maxima(g) {
            if let Some(v) = by_round.get_mut(r as usize - 1) {
                v.push(s);
            }
        }
    }
    by_round.iter().map(|v| summarize(v)).collect()
}

/// Mean raw embedding vector of each round's in-vocabulary guesses.
pub fn round_centroids(table: &EmbeddingTable, game: &GameRecord) -> Vec<(u32, Option<Vec<f64>>)> {
    game.rounds()
        .into_iter()
        .map(|r| {
            let mut sum = vec![0.0f64; table.dim()];
            let mut n = 0usize;
            for g in game.round_guesses(r) {
                if let Some(v) = table.vector(&g.word) {
                    n += 1;
                    for (s, x) in sum.iter_mut().zip(v) {
                        *s += f64::from(*x);
                    }
                }
            }
            let centroid = (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect());
            (r, centroid)
        })
        .collect()
}

/// One row of the report: a (condition, target) cell, or a condition
/// pooled over its targets when `target` is [`ALL_TARGETS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub condition: String,
    pub target: String,
    pub games: usize,
    pub rounds: usize,
    pub guesses: usize,
    pub individual_performance: Option<Summary>,
    pub collective_performance: Option<Summary>,
    pub individual_diversity: Option<Summary>,
    /// Rounds left out of individual diversity for lack of eligible words.
    pub undefined_diversity_rounds: usize,
    /// A single value per target; pooled rows summarize over their targets.
    pub collective_diversity: Option<Summary>,
    pub lexical_diversity: Option<f64>,
    pub round_curve: Vec<Option<Summary>>,
    /// Round-level correlation of round maximum with round diversity.
    pub individual_r: Option<f64>,
    /// Target-level correlation of collective performance with collective diversity.
    pub collective_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub metric: String,
    pub group_a: String,
    pub group_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub cohen_d: Option<f64>,
    pub p_adjusted: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub options: MetricsOptions,
    pub rows: Vec<GroupRow>,
    pub tests: Vec<PairwiseTest>,
}

/// Per-condition samples that the pairwise tests compare.
#[derive(Default)]
struct Samples {
    round_max: Vec<f64>,
    game_max: Vec<f64>,
    round_div: Vec<f64>,
    target_div: Vec<f64>,
    game_lex: Vec<f64>,
}

const TESTED_METRICS: [&str; 5] = [
    "individual_performance",
    "collective_performance",
    "individual_diversity",
    "collective_diversity",
    "lexical_diversity",
];

impl Samples {
    fn get(&self, metric: &str) -> &[f64] {
        match metric {
            "individual_performance" => &self.round_max,
            "collective_performance" => &self.game_max,
            "individual_diversity" => &self.round_div,
            "collective_diversity" => &self.target_div,
            _ => &self.game_lex,
        }
    }
}

fn build_row(
    table: &EmbeddingTable,
    condition: &str,
    target: &str,
    games: &[&GameRecord],
    target_groups: &[Vec<&GameRecord>],
    opts: &MetricsOptions,
) -> GroupRow {
    let rounds = games.iter().map(|g| g.rounds_per_game).max().unwrap_or(0);
    let mut round_max = Vec::new();
    let mut round_div = Vec::new();
    let mut undefined = 0;
    for g in games {
        let maxima: HashMap<u32, f64> = round_maxima(g).into_iter().collect();
        for (r, d) in individual_diversity(table, g, opts.oov) {
            match d {
                Some(d) => {
                    round_div.push(d);
                    round_max.push(maxima[&r]);
                }
                None => undefined += 1,
            }
        }
    }
    let div_values: Vec<f64> = round_div.clone();
    let target_div: Vec<(f64, f64)> = target_groups
        .iter()
        .filter_map(|tg| {
            let d = collective_diversity(table, tg, opts.oov)?;
            let p = collective_performance(tg)?.mean;
            Some((p, d))
        })
        .collect();
    let words: Vec<&str> = games.iter().flat_map(|g| g.guesses.iter().map(|x| x.word.as_str())).collect();
    GroupRow {
        condition: condition.to_string(),
        target: target.to_string(),
        games: games.len(),
        rounds: games.iter().map(|g| g.rounds().len()).sum(),
        guesses: words.len(),
        individual_performance: individual_performance(games, opts.se_unit),
        collective_performance: collective_performance(games),
        individual_diversity: summarize(&div_values),
        undefined_diversity_rounds: undefined,
        collective_diversity: summarize(&target_div.iter().map(|x| x.1).collect::<Vec<_>>()),
        lexical_diversity: lexical_diversity(&words),
        round_curve: performance_by_round(games, rounds),
        individual_r: pearson_r(&round_max, &round_div).ok(),
        collective_r: pearson_r(
            &target_div.iter().map(|x| x.0).collect::<Vec<_>>(),
            &target_div.iter().map(|x| x.1).collect::<Vec<_>>(),
        )
        .ok(),
    }
}

/// Computes the full report: one row per (condition, target), one pooled
/// row per condition, and BH-corrected Welch tests between every pair of
/// conditions.
pub fn analyze(
    table: &EmbeddingTable,
    games: &[GameRecord],
    opts: &MetricsOptions,
) -> Result<MetricsReport, MetricsError> {
    if games.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut grouped: BTreeMap<String, BTreeMap<String, Vec<&GameRecord>>> = BTreeMap::new();
    for g in games {
        grouped
            .entry(g.group(opts.group_by))
            .or_default()
            .entry(g.target.clone())
            .or_default()
            .push(g);
    }

    let mut rows = Vec::new();
    let mut samples: BTreeMap<&str, Samples> = BTreeMap::new();
    for (condition, by_target) in &grouped {
        let s = samples.entry(condition.as_str()).or_default();
        for (target, tg) in by_target {
            rows.push(build_row(table, condition, target, tg, std::slice::from_ref(tg), opts));
            if let Some(d) = collective_diversity(table, tg, opts.oov) {
                s.target_div.push(d);
            }
        }
        let all: Vec<&GameRecord> = by_target.values().flatten().copied().collect();
        let target_groups: Vec<Vec<&GameRecord>> = by_target.values().cloned().collect();
        rows.push(build_row(table, condition, ALL_TARGETS, &all, &target_groups, opts));
        for g in &all {
            s.round_max.extend(round_maxima(g).into_iter().map(|x| x.1));
            s.game_max.extend(game_max(g));
            s.round_div
                .extend(individual_diversity(table, g, opts.oov).into_iter().filter_map(|x| x.1));
            let words: Vec<&str> = g.guesses.iter().map(|x| x.word.as_str()).collect();
            s.game_lex.extend(lexical_diversity(&words));
        }
    }

    let mut tests = Vec::new();
    let names: Vec<&str> = samples.keys().copied().collect();
    for metric in TESTED_METRICS {
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                let (xa, xb) = (samples[a].get(metric), samples[b].get(metric));
                let Ok(w) = welch_t(xa, xb) else { continue };
                tests.push(PairwiseTest {
                    metric: metric.to_string(),
                    group_a: a.to_string(),
                    group_b: b.to_string(),
                    n_a: xa.len(),
                    n_b: xb.len(),
                    mean_a: mean(xa).unwrap_or(f64::NAN),
                    mean_b: mean(xb).unwrap_or(f64::NAN),
                    t: w.t,
                    df: w.df,
                    p: w.p,
                    cohen_d: cohen_d(xa, xb).ok(),
                    p_adjusted: w.p,
                    rejected: false,
                });
            }
        }
    }
    let p: Vec<f64> = tests.iter().map(|t| t.p).collect();
    if let Ok(bh) = bh_fdr(&p, opts.fdr_q) {
        for (t, (adj, rej)) in tests.iter_mut().zip(bh.adjusted.into_iter().zip(bh.rejected)) {
            t.p_adjusted = adj;
            t.rejected = rej;
        }
    }
    Ok(MetricsReport {
        options: *opts,
        rows,
        tests,
    })
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn summary_cells(s: &Option<Summary>) -> [String; 4] {
    match s {
        Some(s) => [num(s.mean), num(s.se), num(s.ci_low), num(s.ci_high)],
        None => Default::default(),
    }
}

impl MetricsReport {
    /// Writes the per-group table. Round-curve columns run to the longest game.
    pub fn write_groups_csv<W: Write>(&self, out: W) -> Result<(), MetricsError> {
        let rounds = self.rows.iter().map(|r| r.round_curve.len()).max().unwrap_or(0);
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["condition", "target", "games", "rounds", "guesses"]
            .map(String::from)
            .to_vec();
        for m in [
            "individual_performance",
            "collective_performance",
            "individual_diversity",
            "collective_diversity",
        ] {
            for s in ["mean", "se", "ci_low", "ci_high"] {
                header.push(format!("{m}_{s}"));
            }
        }
        header.extend(
            ["undefined_diversity_rounds", "lexical_diversity", "individual_r", "collective_r"]
                .map(String::from),
        );
        for r in 1..=rounds {
            header.push(format!("round_{r}_mean"));
            header.push(format!("round_{r}_se"));
        }
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![
                row.condition.clone(),
                row.target.clone(),
                row.games.to_string(),
                row.rounds.to_string(),
                row.guesses.to_string(),
            ];
            for s in [
                &row.individual_performance,
                &row.collective_performance,
                &row.individual_diversity,
                &row.collective_diversity,
            ] {
                rec.extend(summary_cells(s));
            }
            rec.push(row.undefined_diversity_rounds.to_string());
            rec.push(opt(row.lexical_diversity));
            rec.push(opt(row.individual_r));
            rec.push(opt(row.collective_r));
            for r in 0..rounds {
                let s = row.round_curve.get(r).copied().flatten();
                rec.push(opt(s.map(|s| s.mean)));
                rec.push(opt(s.map(|s| s.se)));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_tests_csv<W: Write>(&self, out: W) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "metric", "group_a", "group_b", "n_a", "n_b", "mean_a", "mean_b", "t", "df", "p",
            "cohen_d", "p_adjusted", "rejected",
        ])?;
        for t in &self.tests {
            w.write_record([
                t.metric.clone(),
                t.group_a.clone(),
                t.group_b.clone(),
                t.n_a.to_string(),
                t.n_b.to_string(),
                num(t.mean_a),
                num(t.mean_b),
                num(t.t),
                num(t.df),
                num(t.p),
                opt(t.cohen_d),
                num(t.p_adjusted),
                t.rejected.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Pooled row of a condition.
    pub fn condition_row(&self, condition: &str) -> Option<&GroupRow> {
        self.rows
            .iter()
            .find(|r| r.condition == condition && r.target == ALL_TARGETS)
    }
}

/// Writes one row per (game, round) with the round centroid. Rounds
/// without any in-vocabulary guess are skipped.
pub fn write_centroids_csv<W: Write>(
    table: &EmbeddingTable,
    games: &[GameRecord],
    out: W,
) -> Result<usize, MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["game_id".to_string(), "round".to_string()];
    header.extend((0..table.dim()).map(|i| format!("c{i}")));
    w.write_record(&header)?;
    let mut n = 0;
    for g in games {
        for (round, c) in round_centroids(table, g) {
            let Some(c) = c else { continue };
            let mut rec = vec![g.game_id.clone(), round.to_string()];
            rec.extend(c.iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
            n += 1;
        }
    }
    w.flush()?;
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_rows([
            ("east", vec![1.0, 0.0]),
            ("north", vec![0.0, 1.0]),
            ("west", vec![-1.0, 0.0]),
            ("diag", vec![1.0, 1.0]),
        ])
        .unwrap()
    }

    fn game(id: &str, target: &str, rounds: &[&[(&str, f64)]]) -> GameRecord {
        GameRecord {
            game_id: id.into(),
            target: target.into(),
            condition: "ai_only".into(),
            channel: ChannelKind::BestGuess,
            rounds_per_game: rounds.len() as u32,
            guesses: rounds
                .iter()
                .enumerate()
                .flat_map(|(r, gs)| {
                    gs.iter().enumerate().map(move |(t, (w, s))| GuessRecord {
                        round: r as u32 + 1,
                        turn: t as u32 + 1,
                        word: w.to_string(),
                        score: *s,
                        player: format!("p{r}"),
                        human: false,
                    })
                })
                .collect(),
        }
    }

    #[test]
    fn round_max_examples() {
        let g = game("g", "t", &[&[("east", 10.0), ("north", 50.0), ("west", 30.0)], &[("zzz", 0.0)]]);
        assert_eq!(round_maxima(&g), [(1, 50.0), (2, 0.0)]);
        assert_eq!(collective_performance(&[&g]).unwrap().mean, 50.0);
    }

    #[test]
    fn diversity_examples() {
        let t = table();
        assert_eq!(pairwise_diversity(&t, &["east"; 10], OovPolicy::Exclude), Some(0.0));
        assert!((pairwise_diversity(&t, &["east", "north"], OovPolicy::Exclude).unwrap() - 1.0).abs() < 1e-12);
        assert!((pairwise_diversity(&t, &["east", "west"], OovPolicy::Exclude).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(pairwise_diversity(&t, &["east", "zzz"], OovPolicy::Exclude), None);
        assert_eq!(pairwise_diversity(&t, &["east", "zzz"], OovPolicy::Orthogonal), Some(1.0));
        assert_eq!(pairwise_diversity(&t, &["zzz", "zzz"], OovPolicy::Orthogonal), Some(0.0));
        // east·north = 0, east·diag = north·diag = 1/√2.
        let three = pairwise_diversity(&t, &["east", "north", "diag"], OovPolicy::Exclude).unwrap();
        assert!((three - (1.0 - 2.0f64.sqrt() / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn vector_sum_route_agrees_with_pairs() {
        let t = table();
        let rows = [(0usize, 3u64), (1, 1), (2, 2), (3, 4)];
        let a = distinct_pair_sum(&t, &rows);
        let b = vector_sum_pair_sum(&t, &rows);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn lexical_examples() {
        assert_eq!(lexical_diversity(&["a", "b", "c"]), Some(1.0));
        assert_eq!(lexical_diversity(&["a"; 4]), Some(0.25));
        assert_eq!(lexical_diversity::<&str>(&[]), None);
    }

    #[test]
    fn centroid_is_midpoint() {
        let t = table();
        let g = game("g", "t", &[&[("east", 1.0), ("north", 1.0)], &[("zzz", 0.0)]]);
        let c = round_centroids(&t, &g);
        assert_eq!(c[0], (1, Some(vec![0.5, 0.5])));
        assert_eq!(c[1], (2, None));
    }

    #[test]
    fn plan_id_strips_game_suffix() {
        let g = game("exp-1-g004", "t", &[]);
        assert_eq!(g.plan_id(), "exp-1");
        assert_eq!(game("solo", "t", &[]).plan_id(), "solo");
    }

    #[test]
    fn report_has_rows_and_tests() {
        let t = table();
        let mut games = Vec::new();
        for (i, cond) in ["a", "a", "b", "b"].iter().enumerate() {
            let mut g = game(
                &format!("x-g{i:03}"),
                "east",
                &[
                    &[("east", 10.0 + i as f64), ("north", 5.0)],
                    &[("diag", 20.0 * i as f64), ("west", 1.0)],
                ],
            );
            g.condition = cond.to_string();
            games.push(g);
        }
        let report = analyze(&t, &games, &MetricsOptions::default()).unwrap();
        assert_eq!(report.rows.len(), 4);
        assert_eq!(report.condition_row("a").unwrap().games, 2);
        assert!(report.tests.iter().any(|x| x.metric == "collective_performance"));
        let mut buf = Vec::new();
        report.write_groups_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("condition,target,games"));
        assert!(text.contains("round_2_se"));
        assert!(analyze(&t, &[], &MetricsOptions::default()).is_err());
    }
}
