//! Context-meaning-similarity (CMS) scoring: sessions of translation items
//! that human judges score in `[0, 1]`, aggregated by arithmetic mean.
//!
//! Every mutation is appended to `sessions/{id}.jsonl` before it is applied,
//! so the log alone can rebuild the service state ([`replay_log`]).
//! Resubmitting a score for the same (annotator, item) replaces the earlier
//! one; both events stay in the log.

mod http;
mod log;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::http::{router, serve};
pub use self::log::{replay_log, session_log_path, Event, EventBody};

#[derive(Debug, Error)]
pub enum CmsError {
    #[error("duplicate item id {0:?}")]
    DuplicateItemId(String),
    #[error("a session needs at least one item")]
    EmptyItems,
    #[error("item ids must be non-empty")]
    EmptyItemId,
    #[error("annotator name must be non-empty")]
    EmptyAnnotator,
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("unknown item {0:?}")]
    UnknownItem(String),
    #[error("score {0} is outside [0, 1]")]
    Range(f64),
    #[error("{path}:{line}: corrupt log: {message}")]
    CorruptLog { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationItem {
    pub item_id: String,
    pub source: String,
    pub reference: String,
    pub hypothesis: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub annotator: String,
    pub item_id: String,
    pub value: f64,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemAggregate {
    pub mean: f64,
    pub n_annotators: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmsAggregate {
    /// Scored items only.
    pub per_item: BTreeMap<String, ItemAggregate>,
    /// Mean of the per-item means; `None` until something is scored.
    pub corpus_cms: Option<f64>,
    pub coverage: f64,
    pub n_items: usize,
    pub n_scored_items: usize,
}

/// Result of asking for an annotator's next item.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NextItem {
    pub item: Option<AnnotationItem>,
    pub scored: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub name: String,
    pub created_at: DateTime<Utc>,
    pub n_items: usize,
    pub items: Vec<AnnotationItem>,
    pub annotators: Vec<String>,
    pub n_scores: usize,
}

/// Arithmetic mean from a compensated (Neumaier) sum and a corrected
/// division, clamped to the value range. Grid values such as five scores
/// averaging to 0.65 come out as the nearest f64 to the exact mean.
pub fn bounded_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut comp, mut n) = (0.0f64, 0.0f64, 0usize);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
        n += 1;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if n == 0 {
        return None;
    }
    // Divide the two-word sum, then fold the division residual back in.
    let n = n as f64;
    let hi_sum = sum + comp;
    let lo_sum = comp - (hi_sum - sum);
    let q = hi_sum / n;
    let residual = (-q).mul_add(n, hi_sum) + lo_sum;
    Some((q + residual / n).clamp(lo, hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub name: String,
    pub created_at: DateTime<Utc>,
    items: Vec<AnnotationItem>,
    index: HashMap<String, usize>,
    /// Every submission in log order.
    scores: Vec<Score>,
    /// item index → annotator → effective value.
    effective: BTreeMap<usize, BTreeMap<String, f64>>,
    pub(crate) last_seq: u64,
}

impl Session {
    pub(crate) fn new(
        session_id: String,
        name: String,
        items: Vec<AnnotationItem>,
        created_at: DateTime<Utc>,
    ) -> Result<Self, CmsError> {
        if items.is_empty() {
            return Err(CmsError::EmptyItems);
        }
        let mut index = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if item.item_id.is_empty() {
                return Err(CmsError::EmptyItemId);
            }
            if index.insert(item.item_id.clone(), i).is_some() {
                return Err(CmsError::DuplicateItemId(item.item_id.clone()));
            }
        }
        Ok(Self {
            session_id,
            name,
            created_at,
            items,
            index,
            scores: Vec::new(),
            effective: BTreeMap::new(),
            last_seq: 0,
        })
    }

    pub fn items(&self) -> &[AnnotationItem] {
        &self.items
    }

    pub fn raw_scores(&self) -> &[Score] {
        &self.scores
    }

    /// Effective value for `(annotator, item_id)`, if any.
    pub fn effective_score(&self, annotator: &str, item_id: &str) -> Option<f64> {
        let i = *self.index.get(item_id)?;
        self.effective.get(&i)?.get(annotator).copied()
    }

    fn check_score(&self, annotator: &str, item_id: &str, value: f64) -> Result<usize, CmsError> {
        if annotator.trim().is_empty() {
            return Err(CmsError::EmptyAnnotator);
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(CmsError::Range(value));
        }
        self.index
            .get(item_id)
            .copied()
            .ok_or_else(|| CmsError::UnknownItem(item_id.to_owned()))
    }

    pub(crate) fn apply_score(
        &mut self,
        annotator: &str,
        item_id: &str,
        value: f64,
        at: DateTime<Utc>,
    ) -> Result<(), CmsError> {
        let i = self.check_score(annotator, item_id, value)?;
        self.effective.entry(i).or_default().insert(annotator.to_owned(), value);
        self.scores.push(Score {
            annotator: annotator.to_owned(),
            item_id: item_id.to_owned(),
            value,
            submitted_at: at,
        });
        Ok(())
    }

    pub fn next_item(&self, annotator: &str) -> NextItem {
        let done = |i: &usize| self.effective.get(i).is_some_and(|m| m.contains_key(annotator));
        let scored = (0..self.items.len()).filter(done).count();
        NextItem {
            item: (0..self.items.len()).find(|i| !done(i)).map(|i| self.items[i].clone()),
            scored,
            total: self.items.len(),
        }
    }

    pub fn aggregate(&self) -> CmsAggregate {
        let mut per_item = BTreeMap::new();
        let mut means = Vec::new();
        for (&i, by_annotator) in &self.effective {
            if let Some(mean) = bounded_mean(by_annotator.values().copied()) {
                means.push(mean);
                per_item.insert(
                    self.items[i].item_id.clone(),
                    ItemAggregate {
                        mean,
                        n_annotators: by_annotator.len(),
                    },
                );
            }
        }
        CmsAggregate {
            coverage: means.len() as f64 / self.items.len() as f64,
            corpus_cms: bounded_mean(means.iter().copied()),
            n_items: self.items.len(),
            n_scored_items: means.len(),
            per_item,
        }
    }

    pub fn summary(&self) -> SessionSummary {
        let mut annotators: Vec<String> = self.effective.values().flat_map(|m| m.keys().cloned()).collect();
        annotators.sort();
        annotators.dedup();
        SessionSummary {
            session_id: self.session_id.clone(),
            name: self.name.clone(),
            created_at: self.created_at,
            n_items: self.items.len(),
            items: self.items.clone(),
            annotators,
            n_scores: self.effective.values().map(BTreeMap::len).sum(),
        }
    }

    /// `item_id,source,reference,hypothesis,n_annotators,cms_mean`, one row
    /// per item in session order; unscored items have an empty mean.
    pub fn export_csv(&self) -> String {
        let agg = self.aggregate();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["item_id", "source", "reference", "hypothesis", "n_annotators", "cms_mean"])
            .expect("in-memory write");
        for item in &self.items {
            let (n, mean) = match agg.per_item.get(&item.item_id) {
                Some(a) => (a.n_annotators.to_string(), a.mean.to_string()),
                None => ("0".to_owned(), String::new()),
            };
            w.write_record([&item.item_id, &item.source, &item.reference, &item.hypothesis, &n, &mean])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of utf-8 fields")
    }
}

/// All sessions under one data directory. Reads share a lock; every
/// mutation takes the write lock, appends to the log, then updates memory.
#[derive(Debug)]
pub struct CmsStore {
    data_dir: PathBuf,
    sessions: RwLock<HashMap<String, Session>>,
}

impl CmsStore {
    /// Replays every `sessions/*.jsonl` under `data_dir`.
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self, CmsError> {
        let data_dir = data_dir.into();
        let dir = data_dir.join("sessions");
        let io = |source| CmsError::Io {
            path: dir.display().to_string(),
            source,
        };
        std::fs::create_dir_all(&dir).map_err(io)?;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut sessions = HashMap::new();
        for path in paths {
            if let Some(s) = replay_log(&path)? {
                ::log::debug!("replayed session {} ({} events)", s.session_id, s.last_seq);
                sessions.insert(s.session_id.clone(), s);
            }
        }
        Ok(Self {
            data_dir,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, HashMap<String, Session>> {
        self.sessions.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, HashMap<String, Session>> {
        self.sessions.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Runs `f` on a session under the read lock.
    pub fn with_session<T>(&self, session_id: &str, f: impl FnOnce(&Session) -> T) -> Result<T, CmsError> {
        let sessions = self.read();
        let s = sessions
            .get(session_id)
            .ok_or_else(|| CmsError::UnknownSession(session_id.to_owned()))?;
        Ok(f(s))
    }

    pub fn create_session(&self, name: &str, items: Vec<AnnotationItem>) -> Result<String, CmsError> {
        let now = Utc::now();
        let mut sessions = self.write();
        let id = loop {
            let id = format!("{:032x}", rand::thread_rng().gen::<u128>());
            if !sessions.contains_key(&id) {
                break id;
            }
        };
        let mut session = Session::new(id.clone(), name.to_owned(), items, now)?;
        let event = Event {
            seq: 1,
            body: EventBody::SessionCreated {
                session_id: id.clone(),
                name: session.name.clone(),
                items: session.items.clone(),
            },
            timestamp: now,
        };
        log::append_event(&session_log_path(&self.data_dir, &id), &event)?;
        session.last_seq = 1;
        sessions.insert(id.clone(), session);
        Ok(id)
    }

    pub fn submit_score(&self, session_id: &str, annotator: &str, item_id: &str, value: f64) -> Result<(), CmsError> {
        let now = Utc::now();
        let mut sessions = self.write();
        let session = sessions
            .get_mut(session_id)
            .ok_or_else(|| CmsError::UnknownSession(session_id.to_owned()))?;
        session.check_score(annotator, item_id, value)?;
        let event = Event {
            seq: session.last_seq + 1,
            body: EventBody::ScoreSubmitted {
                annotator: annotator.to_owned(),
                item_id: item_id.to_owned(),
                value,
            },
            timestamp: now,
        };
        log::append_event(&session_log_path(&self.data_dir, session_id), &event)?;
        session.apply_score(annotator, item_id, value, now)?;
        session.last_seq = event.seq;
        Ok(())
    }

    pub fn next_item(&self, session_id: &str, annotator: &str) -> Result<NextItem, CmsError> {
        self.with_session(session_id, |s| s.next_item(annotator))
    }

    pub fn aggregate(&self, session_id: &str) -> Result<CmsAggregate, CmsError> {
        self.with_session(session_id, Session::aggregate)
    }

    pub fn summary(&self, session_id: &str) -> Result<SessionSummary, CmsError> {
        self.with_session(session_id, Session::summary)
    }

    pub fn export_csv(&self, session_id: &str) -> Result<String, CmsError> {
        self.with_session(session_id, Session::export_csv)
    }

    /// A copy of a session's in-memory state.
    pub fn snapshot(&self, session_id: &str) -> Result<Session, CmsError> {
        self.with_session(session_id, Session::clone)
    }
}

/// The six published example predictions as items with ids `"0"..="5"`.
pub fn table_items() -> Vec<AnnotationItem> {
    crate::samples::PREDICTIONS
        .iter()
        .enumerate()
        .map(|(i, p)| AnnotationItem {
            item_id: i.to_string(),
            source: p.source.to_owned(),
            reference: p.reference.to_owned(),
            hypothesis: p.hypothesis.to_owned(),
        })
        .collect()
}
