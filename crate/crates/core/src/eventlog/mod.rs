//! Append-only case event log.
//!
//! The file backend writes an 8-byte magic header followed by records of
//! `[u32 length LE][u32 CRC-32 LE][JSON entry]`. Opening a log replays the
//! records into memory. A torn final record, left by a crash during a write,
//! is truncated away. Corruption anywhere else is an error.

mod export;

pub use export::{export_csv, export_xes, CSV_COLUMNS};

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::EngineEvent;
use crate::ids::{ActorId, CaseId};

pub const MAGIC: &[u8; 8] = b"CPEVLOG1";
const RECORD_HEADER: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogEntry {
    /// Position across all cases, starting at 1.
    pub global_seq: u64,
    pub event: EngineEvent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<ActorId>,
    /// Wire message behind the event, for orders and results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_hl7: Option<String>,
    /// Wall time spent producing the event batch this entry opens.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub processing_us: Option<u64>,
}

impl EventLogEntry {
    pub fn case_id(&self) -> &CaseId {
        &self.event.case_id
    }

    pub fn kind(&self) -> &'static str {
        self.event.kind.name()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("case `{case}` expected seq {expected}, got {got}")]
    SequenceGap { case: CaseId, expected: u64, got: u64 },
    #[error("storage failure: {0}")]
    StorageFailure(#[from] std::io::Error),
    #[error("`{path}` is not an event log")]
    NotALog { path: PathBuf },
    #[error("corrupt record at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Durability {
    /// fsync after every append.
    #[default]
    Sync,
    /// Leave flushing to the operating system.
    Buffered,
}

#[derive(Debug)]
enum Backend {
    Memory,
    File { file: File, durability: Durability },
}

#[derive(Debug)]
pub struct EventLog {
    backend: Backend,
    entries: Vec<EventLogEntry>,
    by_case: HashMap<CaseId, Vec<usize>>,
    /// Bytes of valid data dropped from the tail when the file was opened.
    recovered_bytes: u64,
}

impl EventLog {
    pub fn in_memory() -> Self {
        EventLog {
            backend: Backend::Memory,
            entries: Vec::new(),
            by_case: HashMap::new(),
            recovered_bytes: 0,
        }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, LogError> {
        Self::open_with(path, Durability::Sync)
    }

    pub fn open_with(path: impl AsRef<Path>, durability: Durability) -> Result<Self, LogError> {
        let path = path.as_ref();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let mut log = EventLog {
            backend: Backend::Memory,
            entries: Vec::new(),
            by_case: HashMap::new(),
            recovered_bytes: 0,
        };
        if bytes.len() < MAGIC.len() {
            if !MAGIC.starts_with(&bytes) {
                return Err(LogError::NotALog { path: path.to_path_buf() });
            }
            file.set_len(0)?;
            file.seek(SeekFrom::Start(0))?;
            file.write_all(MAGIC)?;
            file.sync_all()?;
        } else {
            if &bytes[..MAGIC.len()] != MAGIC {
                return Err(LogError::NotALog { path: path.to_path_buf() });
            }
            let good = log.load(&bytes)?;
            if good < bytes.len() {
                log.recovered_bytes = (bytes.len() - good) as u64;
                file.set_len(good as u64)?;
                file.sync_all()?;
            }
        }
        file.seek(SeekFrom::End(0))?;
        log.backend = Backend::File { file, durability };
        Ok(log)
    }

    /// Reads records and returns the length of the valid prefix.
    fn load(&mut self, bytes: &[u8]) -> Result<usize, LogError> {
        let mut at = MAGIC.len();
        while at < bytes.len() {
            if bytes.len() - at < RECORD_HEADER {
                break;
            }
            let len = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
            let crc = u32::from_le_bytes(bytes[at + 4..at + 8].try_into().unwrap());
            let body_start = at + RECORD_HEADER;
            if bytes.len() - body_start < len {
                break;
            }
            let body = &bytes[body_start..body_start + len];
            let is_last = body_start + len == bytes.len();
            if crc32fast::hash(body) != crc {
                if is_last {
                    break;
                }
                return Err(LogError::Corrupt {
                    offset: at as u64,
                    reason: "checksum mismatch".into(),
                });
            }
            let entry: EventLogEntry = serde_json::from_slice(body).map_err(|e| LogError::Corrupt {
                offset: at as u64,
                reason: e.to_string(),
            })?;
            let expected = self.entries.len() as u64 + 1;
            if entry.global_seq != expected {
                return Err(LogError::Corrupt {
                    offset: at as u64,
                    reason: format!("global seq {} where {expected} was expected", entry.global_seq),
                });
            }
            self.check_case_seq(&entry.event)?;
            self.index(entry);
            at = body_start + len;
        }
        Ok(at)
    }

    pub fn recovered_bytes(&self) -> u64 {
        self.recovered_bytes
    }

    fn check_case_seq(&self, event: &EngineEvent) -> Result<(), LogError> {
        let expected = self.last_case_seq(&event.case_id) + 1;
        if event.seq != expected {
            return Err(LogError::SequenceGap {
                case: event.case_id.clone(),
                expected,
                got: event.seq,
            });
        }
        Ok(())
    }

    fn index(&mut self, entry: EventLogEntry) {
        self.by_case
            .entry(entry.event.case_id.clone())
            .or_default()
            .push(self.entries.len());
        self.entries.push(entry);
    }

    pub fn last_case_seq(&self, case: &CaseId) -> u64 {
        self.by_case
            .get(case)
            .and_then(|idx| idx.last())
            .map(|&i| self.entries[i].event.seq)
            .unwrap_or(0)
    }

    pub fn append(
        &mut self,
        event: EngineEvent,
        actor: Option<ActorId>,
        raw_hl7: Option<String>,
        processing_us: Option<u64>,
    ) -> Result<&EventLogEntry, LogError> {
        self.check_case_seq(&event)?;
        let entry = EventLogEntry {
            global_seq: self.entries.len() as u64 + 1,
            event,
            actor,
            raw_hl7,
            processing_us,
        };
        if let Backend::File { file, durability } = &mut self.backend {
            let body = serde_json::to_vec(&entry).expect("log entries serialize");
            let mut record = Vec::with_capacity(RECORD_HEADER + body.len());
            record.extend_from_slice(&(body.len() as u32).to_le_bytes());
            record.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
            record.extend_from_slice(&body);
            file.write_all(&record)?;
            if *durability == Durability::Sync {
                file.sync_data()?;
            }
        }
        self.index(entry);
        Ok(self.entries.last().unwrap())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[EventLogEntry] {
        &self.entries
    }

    /// Entries with `global_seq` strictly greater than `after`.
    pub fn since(&self, after: u64) -> &[EventLogEntry] {
        let start = (after as usize).min(self.entries.len());
        &self.entries[start..]
    }

    pub fn case_entries(&self, case: &CaseId) -> Vec<&EventLogEntry> {
        self.by_case
            .get(case)
            .map(|idx| idx.iter().map(|&i| &self.entries[i]).collect())
            .unwrap_or_default()
    }

    pub fn case_events(&self, case: &CaseId) -> Vec<EngineEvent> {
        self.case_entries(case).into_iter().map(|e| e.event.clone()).collect()
    }

    /// Case ids in order of first appearance.
    pub fn case_ids(&self) -> Vec<CaseId> {
        let mut ids: Vec<(usize, &CaseId)> = self
            .by_case
            .iter()
            .map(|(id, idx)| (idx[0], id))
            .collect();
        ids.sort();
        ids.into_iter().map(|(_, id)| id.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EventKind;
    use crate::time::Instant;

    fn event(case: &str, seq: u64) -> EngineEvent {
        EngineEvent {
            case_id: case.into(),
            seq,
            at: Instant::from_millis(1_700_000_000_000 + seq as i64),
            kind: if seq == 1 {
                EventKind::CaseStarted {
                    guideline_id: "g".into(),
                    revision: 1,
                    patient_ref: "p".into(),
                }
            } else {
                EventKind::TaskEnabled { task: format!("t{seq}").as_str().into() }
            },
        }
    }

    #[test]
    fn rejects_sequence_gaps() {
        let mut log = EventLog::in_memory();
        log.append(event("a", 1), None, None, None).unwrap();
        let err = log.append(event("a", 3), None, None, None).unwrap_err();
        assert!(matches!(err, LogError::SequenceGap { expected: 2, got: 3, .. }));
        log.append(event("b", 1), None, None, None).unwrap();
        assert_eq!(log.case_ids(), vec![CaseId::new("a"), CaseId::new("b")]);
    }

    #[test]
    fn reopen_restores_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        {
            let mut log = EventLog::open(&path).unwrap();
            for s in 1..=5 {
                log.append(event("a", s), Some("dr".into()), None, None).unwrap();
            }
        }
        let log = EventLog::open(&path).unwrap();
        assert_eq!(log.len(), 5);
        assert_eq!(log.case_entries(&"a".into())[4].event, event("a", 5));
        assert_eq!(log.since(3).len(), 2);
    }

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        {
            let mut log = EventLog::open(&path).unwrap();
            for s in 1..=3 {
                log.append(event("a", s), None, None, None).unwrap();
            }
        }
        let full = std::fs::read(&path).unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(&[40, 0, 0, 0, 1, 2, 3, 4, b'{']).unwrap();
        drop(f);
        let mut log = EventLog::open(&path).unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log.recovered_bytes(), 9);
        assert_eq!(std::fs::read(&path).unwrap(), full);
        log.append(event("a", 4), None, None, None).unwrap();
        drop(log);
        assert_eq!(EventLog::open(&path).unwrap().len(), 4);
    }

    #[test]
    fn corruption_before_the_tail_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        {
            let mut log = EventLog::open(&path).unwrap();
            for s in 1..=3 {
                log.append(event("a", s), None, None, None).unwrap();
            }
        }
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[MAGIC.len() + RECORD_HEADER + 3] ^= 0x20;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(EventLog::open(&path), Err(LogError::Corrupt { .. })));
    }

    #[test]
    fn foreign_file_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("notes.txt");
        std::fs::write(&path, b"hello world").unwrap();
        assert!(matches!(EventLog::open(&path), Err(LogError::NotALog { .. })));
    }
}
