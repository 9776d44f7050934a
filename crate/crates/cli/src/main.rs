//! `chainsearch`: prepare vectors, simulate machine chains, serve the
//! experiment API, and analyze logs.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration or usage
//! error, 3 I/O error, 4 LLM provider error.

mod config;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use chainsearch::agents::{AgentError, PlayerFactory};
use chainsearch::embedding::{EmbeddingTable, VectorFormat, VocabFilterRules};
use chainsearch::events::to_jsonl;
use chainsearch::metrics::{analyze, records_from_logs, write_centroids_csv, MetricsError};
use chainsearch::orchestrator::{simulate_plan, Orchestrator, OrchestratorConfig, OrchestratorError};
use chainsearch::plan::{Condition, ExperimentPlan};
use chainsearch::runner::{Clock, MachineRunner};
use chainsearch::store::{read_log_dir, write_atomic, EventStore, JsonlStore};

use config::Config;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Io(String),
    Provider(String),
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Provider(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Io(m) | Failure::Provider(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<OrchestratorError> for Failure {
    fn from(e: OrchestratorError) -> Self {
        use OrchestratorError as E;
        match e {
            E::InvalidPlan(_) | E::DuplicatePlan(_) | E::HumanRoundsInSimulation(_) => {
                Failure::Config(e.to_string())
            }
            E::Game(chainsearch::game::GameError::InvalidConfig(_))
            | E::Game(chainsearch::game::GameError::Scoring(_)) => Failure::Config(e.to_string()),
            E::Agent(AgentError::Provider(_)) => Failure::Provider(e.to_string()),
            E::Storage(_) | E::Restore(_) => Failure::Io(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io(_) | MetricsError::Csv(_) => Failure::Io(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "chainsearch", version, about = "Transmission-chain hidden word search experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Embedding file; overrides `[embeddings] path`.
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a word2vec file to lowercase alphabetic words and re-serialize it.
    PrepareEmbeddings {
        #[arg(long)]
        input: PathBuf,
        /// Input format; guessed from the extension when omitted.
        #[arg(long)]
        input_format: Option<VectorFormat>,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "word2vec-binary")]
        format: VectorFormat,
        #[arg(long, default_value_t = 1)]
        min_length: usize,
        /// Keep tokens with uppercase letters.
        #[arg(long)]
        keep_uppercase: bool,
        /// Keep tokens with non-letter characters.
        #[arg(long)]
        keep_non_alphabetic: bool,
    },
    /// Run a machine-only plan to completion and write its logs.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Overrides the plan seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Zero every timestamp so logs are byte-reproducible.
        #[arg(long)]
        deterministic: bool,
        /// Output directory; logs go to `<out>/logs`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the experiment HTTP API.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        addr: Option<SocketAddr>,
        /// Store directory (event logs, snapshots, plans).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        deterministic: bool,
    },
    /// Compute metrics and pairwise tests from a directory of logs.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Directory of `*.jsonl` game logs (or a simulate output directory).
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write per-round centroids of every game for external projection.
    ExportTrajectories {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::PrepareEmbeddings {
            input,
            input_format,
            out,
            format,
            min_length,
            keep_uppercase,
            keep_non_alphabetic,
        } => {
            if !input.exists() {
                return Err(Failure::Config(format!("input {} does not exist", input.display())));
            }
            let rules = VocabFilterRules {
                require_all_lowercase: !keep_uppercase,
                require_alphabetic_only: !keep_non_alphabetic,
                min_length,
            };
            let table = EmbeddingTable::load_path(&input, input_format.unwrap_or_else(|| VectorFormat::from_path(&input)))
                .map_err(|e| Failure::Io(format!("loading {}: {e}", input.display())))?;
            let before = table.len();
            let table = table
                .filter_vocabulary(&rules)
                .map_err(|e| Failure::Config(e.to_string()))?;
            let mut buf = Vec::new();
            table.write(&mut buf, format)?;
            write_atomic(&out, &buf)?;
            eprintln!("kept {} of {} words (dim {})", table.len(), before, table.dim());
            Ok(())
        }
        Command::Simulate {
            common,
            seed,
            jobs,
            deterministic,
            out,
        } => {
            let cfg = Config::load(common.config.as_deref())?;
            let plan = plan_from(&cfg, seed);
            plan.validate().map_err(Failure::Config)?;
            if !plan.is_machine_only() {
                return Err(Failure::Config(format!(
                    "plan {} has human rounds; use `serve` for it",
                    plan.plan_id
                )));
            }
            let table = cfg.load_table(common.embeddings.as_deref())?;
            let runner = runner(&cfg, table, deterministic)?;
            let jobs = jobs.or(cfg.jobs).unwrap_or_else(default_jobs);
            let games = simulate_plan(&plan, &runner, jobs)?;
            // Everything is simulated before anything is written.
            let logs = out.join("logs");
            write_atomic(&out.join("plan.json"), &json_bytes(&plan)?)?;
            let mut guesses = 0;
            for g in &games {
                let id = g.state.game_id();
                guesses += g.state.guesses.len();
                write_atomic(&logs.join(format!("{id}.jsonl")), to_jsonl(&g.events).as_bytes())?;
                if !g.audit.is_empty() {
                    let mut text = String::new();
                    for r in &g.audit {
                        text.push_str(&serde_json::to_string(r).map_err(|e| Failure::Runtime(e.to_string()))?);
                        text.push('\n');
                    }
                    write_atomic(&logs.join(format!("{id}.llm.jsonl")), text.as_bytes())?;
                }
            }
            eprintln!("{} games, {} guesses -> {}", games.len(), guesses, logs.display());
            Ok(())
        }
        Command::Serve {
            common,
            addr,
            out,
            seed,
            jobs,
            deterministic,
        } => {
            let cfg = Config::load(common.config.as_deref())?;
            let addr = match addr {
                Some(a) => a,
                None => cfg
                    .service
                    .addr
                    .parse()
                    .map_err(|e| Failure::Config(format!("service.addr: {e}")))?,
            };
            let store_dir = out
                .or_else(|| cfg.service.store.as_ref().map(|p| cfg.resolve(p)))
                .unwrap_or_else(|| PathBuf::from("chainsearch-data"));
            let table = cfg.load_table(common.embeddings.as_deref())?;
            let runner = runner(&cfg, table, deterministic)?;
            let store: Arc<dyn EventStore> = Arc::new(JsonlStore::open(&store_dir)?);
            let ocfg = OrchestratorConfig {
                snapshot_every: cfg.service.snapshot_every,
                human_idle_timeout: cfg.service.human_idle_timeout_secs.map(Duration::from_secs),
                inline_machine_rounds: true,
                jobs: jobs.or(cfg.jobs).unwrap_or_else(default_jobs),
            };
            let orch = Orchestrator::recover(runner, store, ocfg)?;
            if cfg.plan.is_some() {
                let plan = plan_from(&cfg, seed);
                if !orch.plan_ids().contains(&plan.plan_id) {
                    orch.create_experiment(plan)?;
                }
            }
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on http://{addr} (store {})", store_dir.display());
            rt.block_on(chainsearch_service::serve(addr, Arc::new(orch)))?;
            Ok(())
        }
        Command::Analyze { common, logs, out } => {
            let cfg = Config::load(common.config.as_deref())?;
            let records = load_records(&logs)?;
            let table = cfg.load_table(common.embeddings.as_deref())?;
            let report = analyze(&table, &records, &cfg.metrics)?;
            let mut groups = Vec::new();
            report.write_groups_csv(&mut groups)?;
            let mut tests = Vec::new();
            report.write_tests_csv(&mut tests)?;
            write_atomic(&out.join("metrics_groups.csv"), &groups)?;
            write_atomic(&out.join("metrics_tests.csv"), &tests)?;
            eprintln!(
                "{} games, {} rows, {} tests -> {}",
                records.len(),
                report.rows.len(),
                report.tests.len(),
                out.display()
            );
            Ok(())
        }
        Command::ExportTrajectories { common, logs, out } => {
            let cfg = Config::load(common.config.as_deref())?;
            let records = load_records(&logs)?;
            let table = cfg.load_table(common.embeddings.as_deref())?;
            let mut buf = Vec::new();
            let n = write_centroids_csv(&table, &records, &mut buf)?;
            write_atomic(&out.join("centroids.csv"), &buf)?;
            eprintln!("{n} centroids -> {}", out.join("centroids.csv").display());
            Ok(())
        }
    }
}

fn plan_from(cfg: &Config, seed: Option<u64>) -> ExperimentPlan {
    let mut plan = cfg
        .plan
        .clone()
        .unwrap_or_else(|| ExperimentPlan::new("ai-only", Condition::AiOnly));
    if let Some(s) = seed.or(cfg.seed) {
        plan.seed = s;
    }
    plan
}

fn runner(cfg: &Config, table: Arc<EmbeddingTable>, deterministic: bool) -> Result<MachineRunner, Failure> {
    let factory = PlayerFactory::new(table, cfg.providers()?);
    let clock = if deterministic { Clock::zero() } else { Clock::System };
    Ok(MachineRunner::new(factory, clock))
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn json_bytes<T: serde::Serialize>(v: &T) -> Result<Vec<u8>, Failure> {
    serde_json::to_vec_pretty(v).map_err(|e| Failure::Runtime(e.to_string()))
}

/// Reads logs from `dir`, or from `dir/logs` when that exists.
fn load_records(dir: &Path) -> Result<Vec<chainsearch::metrics::GameRecord>, Failure> {
    if !dir.is_dir() {
        return Err(Failure::Config(format!("log directory {} does not exist", dir.display())));
    }
    let nested = dir.join("logs");
    let dir = if nested.is_dir() { nested } else { dir.to_path_buf() };
    let logs = read_log_dir(&dir)?;
    if logs.is_empty() {
        return Err(Failure::Config(format!("no game logs in {}", dir.display())));
    }
    Ok(records_from_logs(&logs)?)
}
