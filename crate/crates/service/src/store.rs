//! Sessions as JSON-lines files: a header line, then one line per turn.
//!
//! Headers are written once through a temp file and rename. Turns are
//! appended and synced individually, so a crash loses at most the line
//! being written. Reading stops at the first line that does not parse and
//! reports where.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use evrag_core::orchestrate::{ConversationTurn, Session, TurnSink};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TITLE_CHARS: usize = 60;
const HEADER_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("invalid session id {0:?}")]
    InvalidId(String),
    #[error("session {session_id} is corrupt at line {line}: {reason}")]
    Corrupt {
        session_id: String,
        line: usize,
        reason: String,
    },
    #[error("session {0} already exists")]
    Exists(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    session_id: String,
    title: String,
    created_at: DateTime<Utc>,
}

/// Where a session file stopped parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corruption {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredSession {
    pub title: String,
    pub session: Session,
    pub corruption: Option<Corruption>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub title: String,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub turn_count: usize,
    pub corrupt: bool,
}

pub fn make_title(first_message: &str) -> String {
    first_message.trim().chars().take(TITLE_CHARS).collect()
}

pub fn new_session_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, session_id: &str) -> Result<PathBuf, StoreError> {
        if !valid_id(session_id) {
            return Err(StoreError::InvalidId(session_id.to_string()));
        }
        Ok(self.root.join(format!("{session_id}.jsonl")))
    }

    /// Writes the header for a new, empty session.
    pub fn create(&self, session: &Session, title: &str) -> Result<(), StoreError> {
        let path = self.path(&session.session_id)?;
        if path.exists() {
            return Err(StoreError::Exists(session.session_id.clone()));
        }
        let header = Header {
            version: HEADER_VERSION,
            session_id: session.session_id.clone(),
            title: title.to_string(),
            created_at: session.created_at,
        };
        let mut line = serde_json::to_string(&header).expect("header serializes");
        line.push('\n');
        let tmp = path.with_extension("jsonl.tmp");
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(line.as_bytes()).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        drop(f);
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        for turn in &session.turns {
            self.append_turn(&session.session_id, turn)?;
        }
        Ok(())
    }

    pub fn append_turn(&self, session_id: &str, turn: &ConversationTurn) -> Result<(), StoreError> {
        let path = self.path(session_id)?;
        if !path.exists() {
            return Err(StoreError::NotFound(session_id.to_string()));
        }
        let mut line = serde_json::to_string(turn).expect("turn serializes");
        line.push('\n');
        let mut f = OpenOptions::new().append(true).open(&path).map_err(io_err(&path))?;
        f.write_all(line.as_bytes()).map_err(io_err(&path))?;
        f.sync_data().map_err(io_err(&path))
    }

    pub fn exists(&self, session_id: &str) -> bool {
        self.path(session_id).is_ok_and(|p| p.exists())
    }

    /// Reads a session. Turns after the first unparseable line are not
    /// returned and the corruption is reported instead.
    pub fn load(&self, session_id: &str) -> Result<StoredSession, StoreError> {
        let path = self.path(session_id)?;
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(session_id.to_string()))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        let mut lines = BufReader::new(file).lines();
        let corrupt = |line: usize, reason: String| StoreError::Corrupt {
            session_id: session_id.to_string(),
            line,
            reason,
        };
        let first = match lines.next() {
            Some(l) => l.map_err(io_err(&path))?,
            None => return Err(corrupt(1, "empty file".into())),
        };
        let header: Header = serde_json::from_str(&first).map_err(|e| corrupt(1, e.to_string()))?;
        if header.session_id != session_id {
            return Err(corrupt(1, format!("header names session {}", header.session_id)));
        }
        let mut session = Session {
            session_id: header.session_id,
            created_at: header.created_at,
            turns: Vec::new(),
        };
        let mut corruption = None;
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    corruption = Some(Corruption {
                        line: line_no,
                        reason: e.to_string(),
                    });
                    break;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<ConversationTurn>(&line)
                .map_err(|e| e.to_string())
                .and_then(|turn| {
                    session.turns.push(turn);
                    session.validate().map_err(|e| {
                        session.turns.pop();
                        e
                    })
                });
            if let Err(reason) = parsed {
                corruption = Some(Corruption { line: line_no, reason });
                break;
            }
        }
        Ok(StoredSession {
            title: header.title,
            session,
            corruption,
        })
    }

    /// All sessions, most recently updated first. Sessions whose header
    /// cannot be read are listed with `corrupt` set and file times.
    pub fn list(&self) -> Result<Vec<SessionSummary>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let entry = entry.map_err(io_err(&self.root))?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).filter(|s| valid_id(s)) else {
                continue;
            };
            match self.load(id) {
                Ok(stored) => out.push(SessionSummary {
                    session_id: id.to_string(),
                    updated_at: stored.session.updated_at(),
                    created_at: stored.session.created_at,
                    turn_count: stored.session.turns.len(),
                    title: stored.title,
                    corrupt: stored.corruption.is_some(),
                }),
                Err(StoreError::Corrupt { .. }) => {
                    let modified: DateTime<Utc> = entry
                        .metadata()
                        .and_then(|m| m.modified())
                        .map(DateTime::from)
                        .unwrap_or_default();
                    out.push(SessionSummary {
                        session_id: id.to_string(),
                        title: String::new(),
                        created_at: modified,
                        updated_at: modified,
                        turn_count: 0,
                        corrupt: true,
                    });
                }
                Err(e) => return Err(e),
            }
        }
        out.sort_by(|a, b| b.updated_at.cmp(&a.updated_at).then_with(|| a.session_id.cmp(&b.session_id)));
        Ok(out)
    }
}

impl TurnSink for SessionStore {
    fn append(&self, session_id: &str, turn: &ConversationTurn) -> Result<(), String> {
        self.append_turn(session_id, turn).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use evrag_core::orchestrate::Role;

    #[test]
    fn empty_store_lists_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path()).unwrap();
        assert!(store.list().unwrap().is_empty());
    }

    #[test]
    fn ids_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path()).unwrap();
        assert!(matches!(store.load("../etc/passwd"), Err(StoreError::InvalidId(_))));
        assert!(matches!(store.load("nope"), Err(StoreError::NotFound(_))));
        assert!(valid_id(&new_session_id()));
    }

    #[test]
    fn title_truncates() {
        assert_eq!(make_title(&"é".repeat(80)).chars().count(), 60);
        assert_eq!(make_title("  hi  "), "hi");
    }

    #[test]
    fn create_refuses_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path()).unwrap();
        let s = Session::new("abc");
        store.create(&s, "t").unwrap();
        assert!(matches!(store.create(&s, "t"), Err(StoreError::Exists(_))));
    }

    #[test]
    fn out_of_order_turn_counts_as_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path()).unwrap();
        let s = Session::new("abc");
        store.create(&s, "t").unwrap();
        store.append_turn("abc", &ConversationTurn::new(1, Role::User, "q")).unwrap();
        store.append_turn("abc", &ConversationTurn::new(2, Role::User, "q")).unwrap();
        let loaded = store.load("abc").unwrap();
        assert_eq!(loaded.session.turns.len(), 1);
        assert_eq!(loaded.corruption.unwrap().line, 3);
    }
}
