//! Engine state on disk: one JSON object per line, framed by a header and an
//! end marker so that a truncated write is detected on load.
//!
//! ```text
//! {"record":"header","format":"nbitms-state","version":1,"saved_at":1712}
//! {"record":"state", ...StateRecord}
//! {"record":"alarm", ...Alarm}
//! {"record":"schedule", ...ScheduleEntry}
//! {"record":"end","next_alarm_id":4,"count":9}
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nbitms_core::engine::PersistedState;
use nbitms_core::scheduler::ScheduleEntry;
use nbitms_core::state::{Alarm, StateRecord};
use nbitms_core::Timestamp;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT: &str = "nbitms-state";
pub const VERSION: u32 = 1;
pub const STATE_FILE: &str = "state.jsonl";
pub const TXN_LOG: &str = "transactions.jsonl";
pub const ALARM_LOG: &str = "alarms.jsonl";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: line {line}: {reason}", path.display())]
    Corrupt { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header { format: String, version: u32, saved_at: Timestamp },
    State(StateRecord),
    Alarm(Alarm),
    Schedule(ScheduleEntry),
    End { next_alarm_id: u64, count: usize },
}

/// Writes to a sibling temp file, syncs it, then renames over `path`.
pub fn save_state(path: &Path, state: &PersistedState, saved_at: Timestamp) -> Result<(), PersistError> {
    let io = |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    let file = File::create(&tmp).map_err(io)?;
    let mut w = BufWriter::new(file);
    let mut lines = vec![Line::Header {
        format: FORMAT.into(),
        version: VERSION,
        saved_at,
    }];
    lines.extend(state.records.iter().cloned().map(Line::State));
    lines.extend(state.alarms.iter().cloned().map(Line::Alarm));
    lines.extend(state.schedule.iter().cloned().map(Line::Schedule));
    let count = lines.len() - 1;
    lines.push(Line::End {
        next_alarm_id: state.next_alarm_id,
        count,
    });
    for l in &lines {
        serde_json::to_writer(&mut w, l).expect("state lines serialize");
        w.write_all(b"\n").map_err(io)?;
    }
    let file = w.into_inner().map_err(|e| io(e.into_error()))?;
    file.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// `Ok(None)` when there is no file yet.
pub fn load_state(path: &Path) -> Result<Option<PersistedState>, PersistError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(source) => {
            return Err(PersistError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    let corrupt = |line: usize, reason: String| PersistError::Corrupt {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut state = PersistedState::default();
    let mut seen_header = false;
    let mut body = 0usize;
    for (i, raw) in BufReader::new(file).lines().enumerate() {
        let n = i + 1;
        let raw = raw.map_err(|source| PersistError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let line: Line = serde_json::from_str(&raw).map_err(|e| corrupt(n, e.to_string()))?;
        match line {
            Line::Header { format, version, .. } => {
                if n != 1 || format != FORMAT || version != VERSION {
                    return Err(corrupt(n, format!("unexpected header {format} v{version}")));
                }
                seen_header = true;
            }
            _ if !seen_header => return Err(corrupt(n, "missing header".into())),
            Line::State(r) => state.records.push(r),
            Line::Alarm(a) => state.alarms.push(a),
            Line::Schedule(s) => state.schedule.push(s),
            Line::End { next_alarm_id, count } => {
                if count != body {
                    return Err(corrupt(n, format!("end marker counts {count} records, found {body}")));
                }
                state.next_alarm_id = next_alarm_id;
                return Ok(Some(state));
            }
        }
        if n > 1 {
            body += 1;
        }
    }
    Err(corrupt(body + usize::from(seen_header), "no end marker (truncated write?)".into()))
}

/// Loads the state file, treating a damaged one as absent.
pub fn load_or_fresh(path: &Path) -> Option<PersistedState> {
    match load_state(path) {
        Ok(s) => s,
        Err(e) => {
            tracing::warn!(error = %e, "ignoring persisted state, starting fresh");
            None
        }
    }
}

/// Append-only JSON lines log.
pub struct JsonLog {
    path: PathBuf,
    file: File,
}

impl JsonLog {
    pub fn open(path: &Path) -> Result<Self, PersistError> {
        let io = |source| PersistError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(JsonLog {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append<T: Serialize>(&mut self, item: &T) -> Result<(), PersistError> {
        let mut line = serde_json::to_vec(item).expect("log records serialize");
        line.push(b'\n');
        self.file.write_all(&line).map_err(|source| PersistError::Io {
            path: self.path.clone(),
            source,
        })
    }
}
