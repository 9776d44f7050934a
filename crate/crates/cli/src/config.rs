//! TOML configuration file.
//!
//! ```toml
//! seed = 7
//! jobs = 4
//!
//! [embeddings]
//! path = "vectors.bin"
//!
//! [plan]
//! plan_id = "ai-baseline"
//! condition = "ai_only"
//!
//! [provider]
//! kind = "openai_compatible"
//! base_url = "https://api.example.com/v1"
//! api_key_env = "LLM_API_KEY"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use chainsearch::embedding::{EmbeddingTable, VectorFormat, VocabFilterRules};
use chainsearch::llm::{
    ChatProvider, FixtureProvider, OpenAiCompatibleProvider, ProviderRegistry, Throttled,
};
use chainsearch::metrics::MetricsOptions;
use chainsearch::plan::ExperimentPlan;

use crate::Failure;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub embeddings: Option<EmbeddingsConfig>,
    pub plan: Option<ExperimentPlan>,
    pub provider: Option<ProviderConfig>,
    #[serde(default)]
    pub service: ServiceConfig,
    #[serde(default)]
    pub metrics: MetricsOptions,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingsConfig {
    pub path: PathBuf,
    pub format: Option<VectorFormat>,
    /// Apply the lowercase/alphabetic vocabulary filter on load.
    #[serde(default = "yes")]
    pub filter: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    /// Recorded responses keyed by prompt hash.
    Fixture { path: PathBuf },
    OpenaiCompatible {
        base_url: String,
        /// Name of the environment variable holding the API key.
        api_key_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
        #[serde(default)]
        min_interval_ms: u64,
    },
}

fn default_timeout() -> u64 {
    60
}

fn default_in_flight() -> usize {
    4
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_addr")]
    pub addr: String,
    pub store: Option<PathBuf>,
    #[serde(default = "default_snapshot")]
    pub snapshot_every: u64,
    pub human_idle_timeout_secs: Option<u64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            addr: default_addr(),
            store: None,
            snapshot_every: default_snapshot(),
            human_idle_timeout_secs: None,
        }
    }
}

fn default_addr() -> String {
    "127.0.0.1:8080".into()
}

fn default_snapshot() -> u64 {
    50
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config, Failure> {
        let Some(path) = path else {
            return Ok(Config {
                base_dir: PathBuf::from("."),
                ..Config::default()
            });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("reading {}: {e}", path.display())))?;
        let mut cfg: Config = toml::from_str(&text)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads the table named by `--embeddings`, else by the config file.
    pub fn load_table(&self, flag: Option<&Path>) -> Result<Arc<EmbeddingTable>, Failure> {
        let (path, format, filter) = match (flag, &self.embeddings) {
            (Some(p), e) => (p.to_path_buf(), None, e.as_ref().is_none_or(|e| e.filter)),
            (None, Some(e)) => (self.resolve(&e.path), e.format, e.filter),
            (None, None) => {
                return Err(Failure::Config(
                    "no embeddings given; pass --embeddings or set [embeddings] path".into(),
                ))
            }
        };
        if !path.exists() {
            return Err(Failure::Config(format!("embedding file {} does not exist", path.display())));
        }
        let format = format.unwrap_or_else(|| VectorFormat::from_path(&path));
        let table = EmbeddingTable::load_path(&path, format)
            .map_err(|e| Failure::Io(format!("loading {}: {e}", path.display())))?;
        let table = if filter {
            table
                .filter_vocabulary(&VocabFilterRules::default())
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        } else {
            table
        };
        Ok(Arc::new(table))
    }

    pub fn providers(&self) -> Result<ProviderRegistry, Failure> {
        let provider: Arc<dyn ChatProvider> = match &self.provider {
            None => return Ok(ProviderRegistry::new()),
            Some(ProviderConfig::Fixture { path }) => Arc::new(
                FixtureProvider::load(&self.resolve(path)).map_err(|e| Failure::Provider(e.to_string()))?,
            ),
            Some(ProviderConfig::OpenaiCompatible {
                base_url,
                api_key_env,
                timeout_secs,
                max_in_flight,
                min_interval_ms,
            }) => {
                let timeout = Duration::from_secs(*timeout_secs);
                let inner = match api_key_env {
                    Some(var) => OpenAiCompatibleProvider::from_env(base_url.clone(), var, timeout)
                        .map_err(|e| Failure::Provider(e.to_string()))?,
                    None => OpenAiCompatibleProvider::new(base_url.clone(), None, timeout),
                };
                Arc::new(Throttled::new(
                    inner,
                    *max_in_flight,
                    Duration::from_millis(*min_interval_ms),
                ))
            }
        };
        Ok(ProviderRegistry::with_default(provider))
    }
}
