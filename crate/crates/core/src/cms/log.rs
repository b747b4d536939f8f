//! JSON-lines event log. One file per session, one event per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{AnnotationItem, CmsError, Session};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    SessionCreated {
        session_id: String,
        name: String,
        items: Vec<AnnotationItem>,
    },
    ScoreSubmitted {
        annotator: String,
        item_id: String,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    #[serde(flatten)]
    pub body: EventBody,
    pub timestamp: DateTime<Utc>,
}

pub fn session_log_path(data_dir: &Path, session_id: &str) -> PathBuf {
    data_dir.join("sessions").join(format!("{session_id}.jsonl"))
}

/// Appends one line and syncs it to disk.
pub(crate) fn append_event(path: &Path, event: &Event) -> Result<(), CmsError> {
    let io = |source| CmsError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut line = serde_json::to_string(event).expect("event serialises");
    line.push('\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    file.write_all(line.as_bytes()).map_err(io)?;
    file.sync_data().map_err(io)
}

/// Rebuilds one session from its log. An empty log yields `None`.
pub fn replay_log(path: &Path) -> Result<Option<Session>, CmsError> {
    let file = File::open(path).map_err(|source| CmsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let corrupt = |line: usize, message: String| CmsError::CorruptLog {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut session: Option<Session> = None;
    let mut last_seq: Option<u64> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| corrupt(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(&line).map_err(|e| corrupt(lineno, e.to_string()))?;
        if let Some(prev) = last_seq {
            if event.seq <= prev {
                return Err(corrupt(lineno, format!("sequence number {} after {}", event.seq, prev)));
            }
        }
        last_seq = Some(event.seq);
        match (&mut session, event.body) {
            (None, EventBody::SessionCreated { session_id, name, items }) => {
                let s = Session::new(session_id, name, items, event.timestamp)
                    .map_err(|e| corrupt(lineno, e.to_string()))?;
                session = Some(s);
            }
            (None, EventBody::ScoreSubmitted { .. }) => {
                return Err(corrupt(lineno, "score before session creation".into()));
            }
            (Some(_), EventBody::SessionCreated { .. }) => {
                return Err(corrupt(lineno, "second creation event".into()));
            }
            (Some(s), EventBody::ScoreSubmitted { annotator, item_id, value }) => {
                s.apply_score(&annotator, &item_id, value, event.timestamp)
                    .map_err(|e| corrupt(lineno, e.to_string()))?;
            }
        }
        if let Some(s) = &mut session {
            s.last_seq = event.seq;
        }
    }
    Ok(session)
}
