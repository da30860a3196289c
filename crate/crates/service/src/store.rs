//! Session persistence: one append-only JSONL log per session plus a periodic
//! `{session_id}.snapshot.json`. A command's events are synced to the log
//! before the in-memory session changes, so an acknowledged command survives
//! a crash.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use clxai_core::game::{jsonl, validate_session_id, Session, SessionState};
use clxai_core::{Error, Result};

pub fn snapshot_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("{session_id}.snapshot.json"))
}

/// Atomically replaces the snapshot (write to a temp file, sync, rename).
pub fn write_snapshot(dir: &Path, state: &SessionState) -> Result<()> {
    let path = snapshot_path(dir, state.session_id());
    let tmp = path.with_extension("json.tmp");
    {
        let mut file = std::fs::File::create(&tmp)?;
        serde_json::to_writer(&mut file, state)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, &path)?;
    Ok(())
}

/// Rebuilds a session from disk. A torn final line (an append interrupted
/// before it was acknowledged) is cut off. The snapshot is used when it is
/// consistent with the log; otherwise the whole log is replayed.
pub fn recover(dir: &Path, session_id: &str) -> Result<Session> {
    let log_path = jsonl::log_path(dir, session_id);
    let log = jsonl::read_log(&log_path)?;
    if log.torn_tail {
        tracing::warn!(session_id, "truncating torn tail of event log");
        OpenOptions::new()
            .write(true)
            .open(&log_path)?
            .set_len(log.intact_len)?;
    }
    let snapshot = std::fs::read_to_string(snapshot_path(dir, session_id))
        .ok()
        .and_then(|text| serde_json::from_str::<SessionState>(&text).ok())
        .filter(|s| s.last_seq <= log.events.len() as u64);
    let session = match snapshot {
        Some(state) => match Session::from_snapshot(state, log.events.clone()) {
            Ok(s) => s,
            Err(e) => {
                tracing::warn!(session_id, error = %e, "snapshot unusable, replaying full log");
                Session::from_events(log.events)?
            }
        },
        None => Session::from_events(log.events)?,
    };
    Ok(session)
}

/// A loaded session with its log writer.
#[derive(Debug)]
pub struct Slot {
    session: Session,
    appender: jsonl::Appender,
    dir: PathBuf,
    snapshot_every: usize,
    since_snapshot: usize,
}

impl Slot {
    pub fn session(&self) -> &Session {
        &self.session
    }

    /// Runs `command` on a copy of the session, persists the new events and
    /// only then installs the copy.
    pub fn mutate<R>(&mut self, command: impl FnOnce(&mut Session) -> Result<R>) -> Result<R> {
        let mut next = self.session.clone();
        let before = next.events().len();
        let out = command(&mut next)?;
        let fresh = &next.events()[before..];
        if !fresh.is_empty() {
            self.appender.append(fresh)?;
            self.since_snapshot += fresh.len();
        }
        self.session = next;
        if self.since_snapshot >= self.snapshot_every
            || (self.session.state().is_completed() && self.since_snapshot > 0)
        {
            // The log is authoritative; a failed snapshot only slows recovery.
            match write_snapshot(&self.dir, self.session.state()) {
                Ok(()) => self.since_snapshot = 0,
                Err(e) => tracing::warn!(session_id = self.session.id(), error = %e, "snapshot failed"),
            }
        }
        Ok(out)
    }
}

pub type SlotHandle = Arc<tokio::sync::Mutex<Slot>>;

/// All sessions served by this process, loaded lazily from `dir`.
#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    snapshot_every: usize,
    slots: Mutex<HashMap<String, SlotHandle>>,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>, snapshot_every: usize) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            snapshot_every: snapshot_every.max(1),
            slots: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn slot(&self, session: Session) -> Result<Slot> {
        let appender = jsonl::Appender::open(&jsonl::log_path(&self.dir, session.id()))?;
        Ok(Slot {
            session,
            appender,
            dir: self.dir.clone(),
            snapshot_every: self.snapshot_every,
            since_snapshot: 0,
        })
    }

    /// Persists a freshly created session. Fails if the id is taken.
    pub fn insert(&self, session: Session) -> Result<SlotHandle> {
        let id = session.id().to_owned();
        let mut slots = self.slots.lock().expect("store lock");
        let path = jsonl::log_path(&self.dir, &id);
        if slots.contains_key(&id) || path.exists() {
            return Err(Error::Validation(format!("session {id:?} already exists")));
        }
        // create_new guards against a concurrent process using the same dir.
        OpenOptions::new().write(true).create_new(true).open(&path)?;
        let mut slot = self.slot(session)?;
        slot.appender.append(slot.session.events())?;
        let handle = Arc::new(tokio::sync::Mutex::new(slot));
        slots.insert(id, handle.clone());
        Ok(handle)
    }

    /// The session with this id, recovering it from disk on first use.
    pub fn get(&self, session_id: &str) -> Result<Option<SlotHandle>> {
        validate_session_id(session_id)?;
        let mut slots = self.slots.lock().expect("store lock");
        if let Some(h) = slots.get(session_id) {
            return Ok(Some(h.clone()));
        }
        if !jsonl::log_path(&self.dir, session_id).exists() {
            return Ok(None);
        }
        let session = recover(&self.dir, session_id)?;
        let handle = Arc::new(tokio::sync::Mutex::new(self.slot(session)?));
        slots.insert(session_id.to_owned(), handle.clone());
        Ok(Some(handle))
    }
}
