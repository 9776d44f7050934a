#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use chainsearch::agents::{AgentKind, PlayerFactory};
use chainsearch::embedding::{EmbeddingTable, VectorFormat};
use chainsearch::llm::{FixtureProvider, ProviderRegistry};
use chainsearch::plan::{Condition, ExperimentPlan, DEFAULT_TARGETS};
use chainsearch::runner::{Clock, MachineRunner};

/// Letters-only name for index `i`; the `x` prefix keeps synthetic words
/// apart from ordinary English.
pub fn synthetic_word(i: usize) -> String {
    let mut s = String::from("x");
    let mut i = i;
    loop {
        s.push((b'a' + (i % 26) as u8) as char);
        i /= 26;
        if i == 0 {
            return s;
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// `clusters` tight groups of `per_cluster` words around random directions.
/// The default target words are the first member of the first ten clusters.
pub fn clustered_table(seed: u64, clusters: usize, per_cluster: usize, dim: usize, spread: f64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(clusters * per_cluster);
    for c in 0..clusters {
        let center = unit(gaussian(&mut rng, dim));
        for m in 0..per_cluster {
            let noise = unit(gaussian(&mut rng, dim));
            let v: Vec<f32> = center
                .iter()
                .zip(&noise)
                .map(|(a, b)| (a + spread * b) as f32)
                .collect();
            let word = match DEFAULT_TARGETS.get(c) {
                Some(t) if m == 0 => t.to_string(),
                _ => synthetic_word(c * per_cluster + m),
            };
            rows.push((word, v));
        }
    }
    EmbeddingTable::from_rows(rows).unwrap()
}

/// Unclustered Gaussian vectors.
pub fn gaussian_table(seed: u64, words: usize, dim: usize) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<(String, Vec<f32>)> = (0..words)
        .map(|i| {
            let v = gaussian(&mut rng, dim).into_iter().map(|x| x as f32).collect();
            (synthetic_word(i), v)
        })
        .collect();
    EmbeddingTable::from_rows(rows).unwrap()
}

pub fn runner(table: Arc<EmbeddingTable>) -> MachineRunner {
    MachineRunner::new(PlayerFactory::new(table, ProviderRegistry::new()), Clock::zero())
}

/// Brute-force cosine straight from the stored f32 vectors.
pub fn cosine_oracle(table: &EmbeddingTable, a: &str, b: &str) -> f64 {
    let (x, y) = (table.vector(a).unwrap(), table.vector(b).unwrap());
    let mut dot = 0.0;
    let mut nx = 0.0;
    let mut ny = 0.0;
    for (p, q) in x.iter().zip(y) {
        let (p, q) = (f64::from(*p), f64::from(*q));
        dot += p * q;
        nx += p * p;
        ny += q * q;
    }
    dot / (nx.sqrt() * ny.sqrt())
}

/// Relative agreement: |a - b| <= tol * max(|a|, |b|).
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// A connected bulk of words on the sphere with an empty cap around each of
/// `clusters` tight word groups. Climbing nearest neighbors through the bulk
/// stalls on a cap's rim; only a jump lands inside a group. The default
/// target words are the first member of the first ten groups.
pub fn trap_table(
    seed: u64,
    bulk: usize,
    clusters: usize,
    per_cluster: usize,
    dim: usize,
    cap_cos: f64,
    spread: f64,
) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..clusters).map(|_| unit(gaussian(&mut rng, dim))).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut rows: Vec<(String, Vec<f32>)> = Vec::with_capacity(bulk + clusters * per_cluster);
    for (c, center) in centers.iter().enumerate() {
        for m in 0..per_cluster {
            let noise = unit(gaussian(&mut rng, dim));
            let v = unit(center.iter().zip(&noise).map(|(a, b)| a + spread * b).collect());
            let word = match DEFAULT_TARGETS.get(c) {
                Some(t) if m == 0 => t.to_string(),
                _ => synthetic_word(rows.len()),
            };
            rows.push((word, v.into_iter().map(|x| x as f32).collect()));
        }
    }
    while rows.len() < bulk + clusters * per_cluster {
        let v = unit(gaussian(&mut rng, dim));
        if centers.iter().all(|c| dot(c, &v) < cap_cos) {
            rows.push((synthetic_word(rows.len()), v.into_iter().map(|x| x as f32).collect()));
        }
    }
    EmbeddingTable::from_rows(rows).unwrap()
}

pub const FIXTURE_MODEL: &str = "fixture-chat";

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// One AiOnly game played by a chat model, as recorded in the fixture.
pub fn llm_plan() -> ExperimentPlan {
    let mut plan = ExperimentPlan::new("llm", Condition::AiOnly);
    plan.targets = vec!["harbor".into()];
    plan.games_per_target = 1;
    plan.seed = 2024;
    plan.machine_agents = vec![AgentKind::LlmChat {
        model: FIXTURE_MODEL.into(),
        prompt_template_id: "guess-v1".into(),
        temperature: Some(0.7),
    }];
    plan
}

pub fn load_fixture_table() -> Arc<EmbeddingTable> {
    Arc::new(EmbeddingTable::load_path(&fixtures_dir().join("llm_vectors.txt"), VectorFormat::Word2vecText).unwrap())
}

pub fn load_fixture_provider() -> FixtureProvider {
    FixtureProvider::load(&fixtures_dir().join("llm_fixture.json")).unwrap()
}

pub fn fixture_runner() -> MachineRunner {
    let providers = ProviderRegistry::with_default(Arc::new(load_fixture_provider()));
    MachineRunner::new(PlayerFactory::new(load_fixture_table(), providers), Clock::zero())
}
