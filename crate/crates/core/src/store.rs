//! Event persistence: per-game JSONL logs, LLM audit sidecars, state
//! snapshots and saved plans.
//!
//! Layout of a [`JsonlStore`] directory:
//!
//! ```text
//! logs/<game_id>.jsonl        game events, append-only
//! logs/<game_id>.llm.jsonl    LLM exchanges
//! snapshots/<game_id>.json    latest GameState snapshot
//! plans/<plan_id>.json        experiment plans
//! ```

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;

use crate::events::{from_jsonl, to_jsonl, GameEvent};
use crate::game::{GameError, GameState};
use crate::plan::ExperimentPlan;
use crate::runner::AuditRecord;

pub trait EventStore: Send + Sync {
    fn append(&self, game_id: &str, events: &[GameEvent]) -> io::Result<()>;
    fn append_audit(&self, game_id: &str, records: &[AuditRecord]) -> io::Result<()>;
    fn events(&self, game_id: &str) -> io::Result<Vec<GameEvent>>;
    fn save_snapshot(&self, state: &GameState) -> io::Result<()>;
    fn snapshot(&self, game_id: &str) -> io::Result<Option<GameState>>;
    fn save_plan(&self, plan: &ExperimentPlan) -> io::Result<()>;
    fn plans(&self) -> io::Result<Vec<ExperimentPlan>>;
}

/// Rebuilds a game from its latest snapshot plus the events after it.
pub fn restore_game(store: &dyn EventStore, game_id: &str) -> Result<Option<GameState>, RestoreError> {
    let events = store.events(game_id)?;
    if events.is_empty() {
        return Ok(None);
    }
    let mut state = match store.snapshot(game_id)? {
        Some(s) => s,
        None => GameState::replay(&events[..1])?,
    };
    let from = state.next_seq;
    for e in events.iter().filter(|e| e.seq >= from) {
        state.apply(e)?;
    }
    Ok(Some(state))
}

#[derive(Debug, thiserror::Error)]
pub enum RestoreError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn io_err(e: serde_json::Error) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e)
}

pub struct JsonlStore {
    root: PathBuf,
    // Serializes appends per process; each game has one writer anyway.
    write_lock: Mutex<()>,
}

impl JsonlStore {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        for sub in ["logs", "snapshots", "plans"] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(JsonlStore {
            root,
            write_lock: Mutex::new(()),
        })
    }

    pub fn log_path(&self, game_id: &str) -> PathBuf {
        self.root.join("logs").join(format!("{game_id}.jsonl"))
    }

    pub fn audit_path(&self, game_id: &str) -> PathBuf {
        self.root.join("logs").join(format!("{game_id}.llm.jsonl"))
    }

    /// Appends whole lines. A failed write is rolled back so a later append
    /// never lands on the end of a torn line.
    fn append_lines(&self, path: &Path, text: &str) -> io::Result<()> {
        let _guard = self.write_lock.lock();
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        let len = f.metadata()?.len();
        let written = f.write_all(text.as_bytes()).and_then(|_| f.sync_data());
        if written.is_err() {
            let _ = f.set_len(len);
        }
        written
    }

    /// Reads a log, cutting off a trailing partial line left by a crash
    /// mid-append. Such an event was never acknowledged.
    fn read_lines(&self, path: &Path) -> io::Result<String> {
        let _guard = self.write_lock.lock();
        let mut text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(String::new()),
            Err(e) => return Err(e),
        };
        if !text.is_empty() && !text.ends_with('\n') {
            let keep = text.rfind('\n').map_or(0, |i| i + 1);
            text.truncate(keep);
            let f = OpenOptions::new().write(true).open(path)?;
            f.set_len(keep as u64)?;
            f.sync_data()?;
        }
        Ok(text)
    }
}

impl EventStore for JsonlStore {
    fn append(&self, game_id: &str, events: &[GameEvent]) -> io::Result<()> {
        if events.is_empty() {
            return Ok(());
        }
        self.append_lines(&self.log_path(game_id), &to_jsonl(events))
    }

    fn append_audit(&self, game_id: &str, records: &[AuditRecord]) -> io::Result<()> {
        if records.is_empty() {
            return Ok(());
        }
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r).map_err(io_err)?);
            text.push('\n');
        }
        self.append_lines(&self.audit_path(game_id), &text)
    }

    fn events(&self, game_id: &str) -> io::Result<Vec<GameEvent>> {
        from_jsonl(&self.read_lines(&self.log_path(game_id))?).map_err(io_err)
    }

    fn save_snapshot(&self, state: &GameState) -> io::Result<()> {
        let path = self
            .root
            .join("snapshots")
            .join(format!("{}.json", state.game_id()));
        write_atomic(&path, &serde_json::to_vec(state).map_err(io_err)?)
    }

    fn snapshot(&self, game_id: &str) -> io::Result<Option<GameState>> {
        let path = self.root.join("snapshots").join(format!("{game_id}.json"));
        match fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(io_err),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn save_plan(&self, plan: &ExperimentPlan) -> io::Result<()> {
        let path = self.root.join("plans").join(format!("{}.json", plan.plan_id));
        write_atomic(&path, &serde_json::to_vec_pretty(plan).map_err(io_err)?)
    }

    fn plans(&self) -> io::Result<Vec<ExperimentPlan>> {
        let mut plans = Vec::new();
        for entry in fs::read_dir(self.root.join("plans"))? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("json") {
                plans.push(serde_json::from_slice(&fs::read(&path)?).map_err(io_err)?);
            }
        }
        plans.sort_by(|a: &ExperimentPlan, b| a.plan_id.cmp(&b.plan_id));
        Ok(plans)
    }
}

/// In-process store for tests and ephemeral runs.
#[derive(Default)]
pub struct MemoryStore {
    events: Mutex<HashMap<String, Vec<GameEvent>>>,
    audit: Mutex<HashMap<String, Vec<AuditRecord>>>,
    snapshots: Mutex<HashMap<String, GameState>>,
    plans: Mutex<Vec<ExperimentPlan>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn audit(&self, game_id: &str) -> Vec<AuditRecord> {
        self.audit.lock().get(game_id).cloned().unwrap_or_default()
    }

    pub fn game_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.events.lock().keys().cloned().collect();
        ids.sort();
        ids
    }
}

impl EventStore for MemoryStore {
    fn append(&self, game_id: &str, events: &[GameEvent]) -> io::Result<()> {
        self.events
            .lock()
            .entry(game_id.to_string())
            .or_default()
            .extend_from_slice(events);
        Ok(())
    }

    fn append_audit(&self, game_id: &str, records: &[AuditRecord]) -> io::Result<()> {
        self.audit
            .lock()
            .entry(game_id.to_string())
            .or_default()
            .extend_from_slice(records);
        Ok(())
    }

    fn events(&self, game_id: &str) -> io::Result<Vec<GameEvent>> {
        Ok(self.events.lock().get(game_id).cloned().unwrap_or_default())
    }

    fn save_snapshot(&self, state: &GameState) -> io::Result<()> {
        self.snapshots
            .lock()
            .insert(state.game_id().to_string(), state.clone());
        Ok(())
    }

    fn snapshot(&self, game_id: &str) -> io::Result<Option<GameState>> {
        Ok(self.snapshots.lock().get(game_id).cloned())
    }

    fn save_plan(&self, plan: &ExperimentPlan) -> io::Result<()> {
        let mut plans = self.plans.lock();
        plans.retain(|p| p.plan_id != plan.plan_id);
        plans.push(plan.clone());
        Ok(())
    }

    fn plans(&self) -> io::Result<Vec<ExperimentPlan>> {
        let mut plans = self.plans.lock().clone();
        plans.sort_by(|a, b| a.plan_id.cmp(&b.plan_id));
        Ok(plans)
    }
}

/// Reads every game log (`*.jsonl`, excluding `*.llm.jsonl`) under `dir`,
/// sorted by file name.
pub fn read_log_dir(dir: &Path) -> io::Result<Vec<Vec<GameEvent>>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".jsonl") && !name.ends_with(".llm.jsonl")
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| from_jsonl(&fs::read_to_string(p)?).map_err(io_err))
        .collect()
}
