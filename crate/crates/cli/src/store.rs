//! Directory-backed template store.
//!
//! Layout under the store root:
//!
//! - `store.toml`: the acceptance threshold, fixed at creation.
//! - `index.jsonl`: one JSON object per enrolled record (id, filename,
//!   source, enrolled_at), append-only.
//! - `<id>.nmap`: one template per record.
//! - `querylog.jsonl`: one JSON object per verify call, append-only.
//! - `index.lock`: exists only while a writer holds the enrollment lock.
//!
//! Ids double as file names, so they are restricted to `[A-Za-z0-9._-]`.
//! Templates deliberately sit in the clear: the store models a verifier
//! without template protection, which is the attack surface the digital
//! forgery drivers exploit.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use papergrain_core::config::CaptureMode;
use papergrain_core::{QueryLogEntry, TemplateStore};
use serde::{Deserialize, Serialize};

use crate::formats;
use crate::{CliError, Result};

pub const CONFIG_FILE: &str = "store.toml";
pub const INDEX_FILE: &str = "index.jsonl";
pub const QUERY_LOG_FILE: &str = "querylog.jsonl";
const LOCK_FILE: &str = "index.lock";
const LOCK_ATTEMPTS: u32 = 40;
const LOCK_RETRY: Duration = Duration::from_millis(25);

#[derive(Serialize, Deserialize)]
struct StoreConfig {
    threshold: f64,
}

/// One `index.jsonl` line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexRow {
    pub id: String,
    pub filename: String,
    pub source: CaptureMode,
    pub enrolled_at: u64,
}

/// One `querylog.jsonl` line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryLogRow {
    pub ts: u64,
    pub id: Option<String>,
    pub corr_x: f64,
    pub corr_y: f64,
}

impl From<&QueryLogEntry> for QueryLogRow {
    fn from(e: &QueryLogEntry) -> Self {
        QueryLogRow {
            ts: e.ts,
            id: e.id.clone(),
            corr_x: e.score.corr_x,
            corr_y: e.score.corr_y,
        }
    }
}

/// Handle on a store directory. Cheap to construct; all data lives on disk.
pub struct DirStore {
    root: PathBuf,
    threshold: f64,
}

impl DirStore {
    /// Opens an existing store; the threshold comes from `store.toml`.
    pub fn open(root: &Path) -> Result<Self> {
        let cfg_path = root.join(CONFIG_FILE);
        let raw = fs::read_to_string(&cfg_path).map_err(CliError::io(&cfg_path))?;
        let cfg: StoreConfig = toml::from_str(&raw)
            .map_err(|e| CliError::format(&cfg_path, format!("bad store config: {e}")))?;
        Ok(DirStore { root: root.to_path_buf(), threshold: cfg.threshold })
    }

    /// Opens the store, creating it with `threshold` when absent. An existing
    /// store keeps its recorded threshold; the argument only seeds creation.
    pub fn open_or_init(root: &Path, threshold: f64) -> Result<Self> {
        if root.join(CONFIG_FILE).exists() {
            return Self::open(root);
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(CliError::Core(papergrain_core::Error::InvalidParam(
                "threshold must lie in (0, 1)",
            )));
        }
        fs::create_dir_all(root).map_err(CliError::io(root))?;
        let cfg = toml::to_string(&StoreConfig { threshold })
            .expect("store config always serializes");
        formats::write_atomic(&root.join(CONFIG_FILE), cfg.as_bytes())?;
        Ok(DirStore { root: root.to_path_buf(), threshold })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn index(&self) -> Result<Vec<IndexRow>> {
        read_jsonl(&self.root.join(INDEX_FILE))
    }

    pub fn query_log(&self) -> Result<Vec<QueryLogRow>> {
        read_jsonl(&self.root.join(QUERY_LOG_FILE))
    }

    /// Loads every record into an in-memory [`TemplateStore`] for scoring.
    pub fn load(&self) -> Result<TemplateStore> {
        let mut store = TemplateStore::new(self.threshold)?;
        for row in self.index()? {
            let map = formats::read_nmap(&self.root.join(&row.filename))?;
            store.enroll(&row.id, map, row.source, row.enrolled_at)?;
        }
        Ok(store)
    }

    /// Persists one template under `id`, holding the writer lock across the
    /// duplicate check and the index append.
    pub fn enroll(
        &self,
        id: &str,
        map: &papergrain_core::NormMap,
        source: CaptureMode,
        enrolled_at: u64,
    ) -> Result<()> {
        validate_id(id)?;
        let _lock = LockGuard::acquire(&self.root)?;
        if self.index()?.iter().any(|row| row.id == id) {
            return Err(CliError::Core(papergrain_core::Error::DuplicateId(id.to_string())));
        }
        let filename = format!("{id}.nmap");
        formats::write_nmap(&self.root.join(&filename), map)?;
        let row = IndexRow { id: id.to_string(), filename, source, enrolled_at };
        append_jsonl(&self.root.join(INDEX_FILE), &[row])
    }

    /// Appends verify audit entries; call once per command with everything
    /// the in-memory store accumulated.
    pub fn append_query_log(&self, entries: &[QueryLogEntry]) -> Result<()> {
        let rows: Vec<QueryLogRow> = entries.iter().map(QueryLogRow::from).collect();
        append_jsonl(&self.root.join(QUERY_LOG_FILE), &rows)
    }
}

/// Ids become file names; keep them filesystem-safe on every platform.
fn validate_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'));
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "invalid id {id:?}: use 1-128 chars of [A-Za-z0-9._-], not starting with '.'"
        )))
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let raw = match fs::read_to_string(path) {
        Ok(raw) => raw,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(CliError::io(path)(e)),
    };
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| {
            CliError::format(path, format!("bad record on line {}: {e}", i + 1))
        })?);
    }
    Ok(out)
}

fn append_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = String::new();
    for row in rows {
        buf.push_str(&serde_json::to_string(row).expect("rows always serialize"));
        buf.push('\n');
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(CliError::io(path))?;
    file.write_all(buf.as_bytes()).map_err(CliError::io(path))
}

/// Exclusive writer lock: a lock file created with `O_EXCL`, removed on drop.
struct LockGuard {
    path: PathBuf,
}

impl LockGuard {
    fn acquire(root: &Path) -> Result<Self> {
        let path = root.join(LOCK_FILE);
        for _ in 0..LOCK_ATTEMPTS {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(LockGuard { path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    std::thread::sleep(LOCK_RETRY);
                }
                Err(e) => return Err(CliError::io(&path)(e)),
            }
        }
        Err(CliError::Core(papergrain_core::Error::StorageFailure(format!(
            "could not acquire writer lock {} (stale lock file?)",
            path.display()
        ))))
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
