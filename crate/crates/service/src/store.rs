//! Session registry with an append-only log per session.
//!
//! Each session owns two files in the data directory: `<id>.config.json`
//! written once at creation, and `<id>.log.jsonl` with one line appended per
//! response. [`SessionStore::open`] rebuilds every session from those files.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use glyphmotion::experiment::{parse_log, Session, SessionConfig, TrialRecord};
use glyphmotion::preprocess::prepare_default;
use glyphmotion::{Letter, PresentationCondition, StrokeFont};

use crate::ApiError;

const CONFIG_SUFFIX: &str = ".config.json";
const LOG_SUFFIX: &str = ".log.jsonl";

/// A trial that has been fetched but not answered yet.
#[derive(Debug, Clone, Copy)]
pub struct Pending {
    pub index: usize,
    pub letter: Letter,
    pub fetched: Instant,
}

pub struct SessionEntry {
    pub session: Session,
    pub pending: Option<Pending>,
    pub prepared: Arc<StrokeFont>,
    log: Option<File>,
}

impl SessionEntry {
    fn append(&mut self, record: &TrialRecord) -> Result<(), ApiError> {
        if let Some(f) = self.log.as_mut() {
            let mut line = record.to_log_line();
            line.push('\n');
            f.write_all(line.as_bytes())
                .and_then(|_| f.sync_data())
                .map_err(ApiError::storage)?;
        }
        Ok(())
    }

    /// Records the response to the pending trial and persists it.
    pub fn answer(&mut self, response: Letter) -> Result<TrialRecord, ApiError> {
        let pending = self.pending.take().ok_or(ApiError::NoPendingTrial)?;
        let latency = pending.fetched.elapsed().as_millis() as u64;
        let record = self
            .session
            .submit(Some(response), latency)
            .map_err(ApiError::from_experiment)?
            .clone();
        self.append(&record)?;
        Ok(record)
    }
}

pub struct SessionStore {
    font: StrokeFont,
    data_dir: Option<PathBuf>,
    prepared: Mutex<Vec<(PresentationCondition, Arc<StrokeFont>)>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionEntry>>>>,
}

impl SessionStore {
    /// Keeps everything in memory.
    pub fn in_memory(font: StrokeFont) -> Self {
        SessionStore {
            font,
            data_dir: None,
            prepared: Mutex::new(Vec::new()),
            sessions: RwLock::new(HashMap::new()),
        }
    }

    /// Uses `dir` for persistence, restoring any sessions already there.
    pub fn open(font: StrokeFont, dir: impl Into<PathBuf>) -> Result<Self, ApiError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(ApiError::storage)?;
        let store = SessionStore {
            data_dir: Some(dir.clone()),
            ..SessionStore::in_memory(font)
        };
        let mut entries: Vec<_> = fs::read_dir(&dir)
            .map_err(ApiError::storage)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(CONFIG_SUFFIX).map(str::to_string)
            })
            .collect();
        entries.sort();
        for id in entries {
            store.restore(&dir, &id)?;
        }
        Ok(store)
    }

    fn restore(&self, dir: &Path, id: &str) -> Result<(), ApiError> {
        let cfg_text =
            fs::read_to_string(dir.join(format!("{id}{CONFIG_SUFFIX}"))).map_err(ApiError::storage)?;
        let cfg: SessionConfig = serde_json::from_str(&cfg_text)
            .map_err(|e| ApiError::Storage(format!("{id}: {e}")))?;
        let log_path = dir.join(format!("{id}{LOG_SUFFIX}"));
        let log_text = fs::read_to_string(&log_path).unwrap_or_default();
        let records = parse_log(&log_text).map_err(|e| ApiError::Storage(format!("{id}: {e}")))?;
        let session =
            Session::restore(cfg, records).map_err(|e| ApiError::Storage(format!("{id}: {e}")))?;
        let entry = self.entry(session, Some(log_path))?;
        self.sessions
            .write()
            .expect("session map")
            .insert(id.to_string(), Arc::new(Mutex::new(entry)));
        Ok(())
    }

    fn entry(&self, session: Session, log: Option<PathBuf>) -> Result<SessionEntry, ApiError> {
        let prepared = self.prepared_for(session.config().condition)?;
        let log = match log {
            Some(p) => Some(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(ApiError::storage)?,
            ),
            None => None,
        };
        Ok(SessionEntry {
            session,
            pending: None,
            prepared,
            log,
        })
    }

    pub fn font(&self) -> &StrokeFont {
        &self.font
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    /// The font prepared at `cond`, computed once per condition.
    pub fn prepared_for(&self, cond: PresentationCondition) -> Result<Arc<StrokeFont>, ApiError> {
        let mut cache = self.prepared.lock().expect("prepared cache");
        if let Some((_, f)) = cache.iter().find(|(c, _)| *c == cond) {
            return Ok(f.clone());
        }
        let f = Arc::new(prepare_default(&self.font, cond).map_err(|e| ApiError::InvalidConfig {
            field: "condition".into(),
            message: e.to_string(),
        })?);
        cache.push((cond, f.clone()));
        Ok(f)
    }

    pub fn create(&self, cfg: SessionConfig) -> Result<String, ApiError> {
        let session = Session::new(cfg).map_err(ApiError::from_experiment)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let log = match &self.data_dir {
            Some(dir) => {
                let cfg_json = serde_json::to_string_pretty(session.config()).expect("config json");
                fs::write(dir.join(format!("{id}{CONFIG_SUFFIX}")), cfg_json)
                    .map_err(ApiError::storage)?;
                Some(dir.join(format!("{id}{LOG_SUFFIX}")))
            }
            None => None,
        };
        let entry = self.entry(session, log)?;
        self.sessions
            .write()
            .expect("session map")
            .insert(id.clone(), Arc::new(Mutex::new(entry)));
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<SessionEntry>>, ApiError> {
        self.sessions
            .read()
            .expect("session map")
            .get(id)
            .cloned()
            .ok_or(ApiError::UnknownSession)
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("session map").keys().cloned().collect();
        ids.sort();
        ids
    }
}
