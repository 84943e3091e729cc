//! Append-only sighting log. Every change is one JSON line; the in-memory
//! view is rebuilt by replaying the file at startup.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use scorpid_core::infer::{ClassScores, Detection};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Confirmed,
    Rejected,
    Unsure,
    #[default]
    Unreviewed,
}

impl std::str::FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown verdict `{s}`"))
    }
}

/// Client-supplied part of a sighting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewSighting {
    pub image_ref: String,
    #[serde(default)]
    pub detections: Vec<Detection>,
    #[serde(default)]
    pub class_scores: Option<ClassScores>,
    #[serde(default)]
    pub operator_note: String,
    #[serde(default)]
    pub operator_verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sighting {
    pub id: u64,
    /// Milliseconds since the Unix epoch, UTC.
    pub timestamp: u64,
    pub image_ref: String,
    pub detections: Vec<Detection>,
    pub class_scores: Option<ClassScores>,
    pub operator_note: String,
    pub operator_verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
enum Event {
    Created(Sighting),
    Verdict {
        id: u64,
        timestamp: u64,
        verdict: Verdict,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum SightingError {
    #[error("sighting log {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("sighting log {} line {line}: {message}", path.display())]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("unknown sighting {0}")]
    Unknown(u64),
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SightingFilter {
    /// Keep sightings with `timestamp >= since`.
    pub since: Option<u64>,
    pub verdict: Option<Verdict>,
}

struct State {
    sightings: BTreeMap<u64, Sighting>,
    next_id: u64,
    last_ts: u64,
    file: Option<File>,
}

pub struct SightingStore {
    path: Option<PathBuf>,
    state: Mutex<State>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl SightingStore {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            state: Mutex::new(State {
                sightings: BTreeMap::new(),
                next_id: 1,
                last_ts: 0,
                file: None,
            }),
        }
    }

    /// Opens (creating if needed) and replays the log at `path`.
    pub fn open(path: &Path) -> Result<Self, SightingError> {
        let io = |source| SightingError::Io {
            path: path.to_path_buf(),
            source,
        };
        let store = Self::in_memory();
        let mut state = store.state.lock().expect("fresh mutex");
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line_text = line.map_err(io)?;
                if line_text.trim().is_empty() {
                    continue;
                }
                let event: Event = serde_json::from_str(&line_text).map_err(|e| SightingError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                apply(&mut state, event);
            }
        }
        state.file = Some(OpenOptions::new().create(true).append(true).open(path).map_err(io)?);
        drop(state);
        Ok(Self {
            path: Some(path.to_path_buf()),
            ..store
        })
    }

    fn append(&self, state: &mut State, event: &Event) -> Result<(), SightingError> {
        if let Some(file) = state.file.as_mut() {
            let mut line = serde_json::to_vec(event).expect("event serializes");
            line.push(b'\n');
            file.write_all(&line)
                .and_then(|_| file.flush())
                .map_err(|source| SightingError::Io {
                    path: self.path.clone().unwrap_or_default(),
                    source,
                })?;
        }
        Ok(())
    }

    pub fn create(&self, new: NewSighting) -> Result<Sighting, SightingError> {
        let mut state = self.state.lock().expect("sighting lock");
        let timestamp = now_ms().max(state.last_ts);
        let sighting = Sighting {
            id: state.next_id,
            timestamp,
            image_ref: new.image_ref,
            detections: new.detections,
            class_scores: new.class_scores,
            operator_note: new.operator_note,
            operator_verdict: new.operator_verdict,
        };
        let event = Event::Created(sighting.clone());
        self.append(&mut state, &event)?;
        apply(&mut state, event);
        Ok(sighting)
    }

    pub fn set_verdict(&self, id: u64, verdict: Verdict, note: Option<String>) -> Result<Sighting, SightingError> {
        let mut state = self.state.lock().expect("sighting lock");
        if !state.sightings.contains_key(&id) {
            return Err(SightingError::Unknown(id));
        }
        let event = Event::Verdict {
            id,
            timestamp: now_ms().max(state.last_ts),
            verdict,
            note,
        };
        self.append(&mut state, &event)?;
        apply(&mut state, event);
        Ok(state.sightings[&id].clone())
    }

    pub fn list(&self, filter: &SightingFilter) -> Vec<Sighting> {
        let state = self.state.lock().expect("sighting lock");
        state
            .sightings
            .values()
            .filter(|s| filter.since.is_none_or(|t| s.timestamp >= t))
            .filter(|s| filter.verdict.is_none_or(|v| s.operator_verdict == v))
            .cloned()
            .collect()
    }
}

fn apply(state: &mut State, event: Event) {
    match event {
        Event::Created(s) => {
            state.next_id = state.next_id.max(s.id + 1);
            state.last_ts = state.last_ts.max(s.timestamp);
            state.sightings.insert(s.id, s);
        }
        Event::Verdict {
            id,
            timestamp,
            verdict,
            note,
        } => {
            state.last_ts = state.last_ts.max(timestamp);
            if let Some(s) = state.sightings.get_mut(&id) {
                s.operator_verdict = verdict;
                if let Some(n) = note {
                    s.operator_note = n;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn new(note: &str) -> NewSighting {
        NewSighting {
            image_ref: "frame-1".into(),
            detections: Vec::new(),
            class_scores: None,
            operator_note: note.into(),
            operator_verdict: Verdict::Unreviewed,
        }
    }

    #[test]
    fn replay_restores_state_and_ids_continue() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let store = SightingStore::open(&path).unwrap();
        let a = store.create(new("a")).unwrap();
        let b = store.create(new("b")).unwrap();
        assert!(b.timestamp >= a.timestamp);
        store.set_verdict(a.id, Verdict::Rejected, Some("spider".into())).unwrap();
        drop(store);

        let store = SightingStore::open(&path).unwrap();
        let all = store.list(&SightingFilter::default());
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].operator_verdict, Verdict::Rejected);
        assert_eq!(all[0].operator_note, "spider");
        let c = store.create(new("c")).unwrap();
        assert_eq!(c.id, 3);
        let lines = std::fs::read_to_string(&path).unwrap().lines().count();
        assert_eq!(lines, 4);
    }

    #[test]
    fn filters_and_unknown_ids() {
        let store = SightingStore::in_memory();
        let a = store.create(new("a")).unwrap();
        store.create(new("b")).unwrap();
        store.set_verdict(a.id, Verdict::Confirmed, None).unwrap();
        let confirmed = store.list(&SightingFilter {
            verdict: Some(Verdict::Confirmed),
            ..Default::default()
        });
        assert_eq!(confirmed.len(), 1);
        let later = store.list(&SightingFilter {
            since: Some(u64::MAX),
            ..Default::default()
        });
        assert!(later.is_empty());
        assert!(matches!(store.set_verdict(99, Verdict::Unsure, None), Err(SightingError::Unknown(99))));
    }
}
