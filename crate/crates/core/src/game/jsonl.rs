//! One JSON Lines file per session, `{session_id}.jsonl`, one event per line
//! in seq order.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::events::GameEvent;
use crate::error::{Error, Result};

pub fn log_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("{session_id}.jsonl"))
}

pub fn encode_line(event: &GameEvent) -> String {
    let mut line = serde_json::to_string(event).expect("event serializes");
    line.push('\n');
    line
}

pub fn encode(events: &[GameEvent]) -> String {
    events.iter().map(encode_line).collect()
}

pub fn write_all(path: &Path, events: &[GameEvent]) -> Result<()> {
    let mut file = File::create(path)?;
    file.write_all(encode(events).as_bytes())?;
    file.sync_data()?;
    Ok(())
}

/// Durable appender: every append is flushed and synced before returning.
#[derive(Debug)]
pub struct Appender {
    file: File,
}

impl Appender {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file })
    }

    pub fn append(&mut self, events: &[GameEvent]) -> Result<()> {
        self.file.write_all(encode(events).as_bytes())?;
        self.file.sync_data()?;
        Ok(())
    }
}

/// Parsed log plus the byte length of its intact prefix.
#[derive(Debug)]
pub struct ReadLog {
    pub events: Vec<GameEvent>,
    pub intact_len: u64,
    /// A final line without its newline that failed to parse (an interrupted write).
    pub torn_tail: bool,
}

pub fn read_events(path: &Path) -> Result<Vec<GameEvent>> {
    let log = read_log(path)?;
    if log.torn_tail {
        return Err(Error::Corruption(format!("{} ends in a partial line", path.display())));
    }
    Ok(log.events)
}

/// Reads a log, tolerating a torn final line.
pub fn read_log(path: &Path) -> Result<ReadLog> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    let mut intact_len = 0u64;
    let mut line = String::new();
    let mut line_no = 0usize;
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            return Ok(ReadLog {
                events,
                intact_len,
                torn_tail: false,
            });
        }
        line_no += 1;
        let complete = line.ends_with('\n');
        if line.trim().is_empty() {
            intact_len += n as u64;
            continue;
        }
        if !complete {
            // Lines are written with their newline in one call; a missing one
            // means the write never finished and was never acknowledged.
            return Ok(ReadLog {
                events,
                intact_len,
                torn_tail: true,
            });
        }
        let event = serde_json::from_str::<GameEvent>(line.trim_end())
            .map_err(|e| Error::Corruption(format!("{} line {line_no}: {e}", path.display())))?;
        events.push(event);
        intact_len += n as u64;
    }
}
