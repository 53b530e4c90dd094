//! Append-only event log.
//!
//! File layout (integers little-endian):
//!
//! ```text
//! header : magic "ARENALOG" (8 bytes) | version u32
//! record : body_len u32 | crc32(body) u32 | body
//! body   : seq_no u64 | event as UTF-8 JSON
//! ```
//!
//! Sequence numbers start at 1 and are gap-free. On open, a torn final record
//! (short read, or checksum failure on the last record in the file) is
//! truncated away. A checksum failure anywhere else is reported as corruption.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ArenaError, Result};
use crate::ingest::catalog::CatalogChange;
use crate::model::{AbsoluteScore, ComparisonVote, Dimension, ScoreRange, VoteChoice};
use crate::scheduler::{BattlePair, Pack, SessionSpec};

pub const LOG_MAGIC: [u8; 8] = *b"ARENALOG";
pub const LOG_VERSION: u32 = 1;
pub const LOG_HEADER_LEN: u64 = 12;
const RECORD_PREFIX: usize = 8;

/// Curator-provided answer key for a gold pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldKey {
    pub pair_id: String,
    pub choices: std::collections::BTreeMap<Dimension, VoteChoice>,
}

/// A batch of scheduled pairs and the packs that bundle them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScheduleBatch {
    pub pairs: Vec<BattlePair>,
    pub packs: Vec<Pack>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum Event {
    Vote(ComparisonVote),
    Score(AbsoluteScore),
    Catalog(CatalogChange),
    Schedule(ScheduleBatch),
    Gold(GoldKey),
    SessionOpened(SessionSpec),
}

impl Event {
    /// Stateless invariants. Checks that need derived state (known pairs,
    /// known assets) live in [`crate::state::ArenaState::check`].
    pub fn validate(&self) -> Result<()> {
        match self {
            Event::Vote(v) => v.validate(),
            Event::Score(s) => s.validate(&ScoreRange::DEFAULT_ALLOWED),
            Event::Gold(g) => {
                let missing: Vec<_> = Dimension::ALL
                    .iter()
                    .filter(|d| !g.choices.contains_key(d))
                    .map(|d| d.as_str())
                    .collect();
                if missing.is_empty() {
                    Ok(())
                } else {
                    Err(ArenaError::invalid(
                        "choices",
                        format!("gold key for '{}' missing {}", g.pair_id, missing.join(", ")),
                    ))
                }
            }
            Event::SessionOpened(s) => {
                if s.session_id.is_empty() || s.pair_ids.is_empty() {
                    Err(ArenaError::invalid("session", "session needs an id and at least one pair"))
                } else {
                    Ok(())
                }
            }
            Event::Catalog(_) | Event::Schedule(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub seq_no: u64,
    pub event: Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SyncPolicy {
    /// `fsync` after every record; an acknowledged append survives a crash.
    #[default]
    Always,
    /// Leave flushing to the OS. For bulk imports and tests.
    Never,
}

/// What recovery found when opening a log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Recovery {
    pub records: u64,
    pub truncated_bytes: u64,
}

/// Single-writer handle to an event log file.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    len: u64,
    last_seq: u64,
    sync: SyncPolicy,
}

impl EventLog {
    /// Opens or creates a log, truncating a torn tail. Returns the handle and
    /// every durable event in order.
    pub fn open(path: impl AsRef<Path>, sync: SyncPolicy) -> Result<(EventLog, Vec<LoggedEvent>, Recovery)> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&path)
            .map_err(|e| ArenaError::io(&path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| ArenaError::io(&path, e))?;

        let header = header_bytes();
        if (bytes.len() as u64) < LOG_HEADER_LEN {
            if !header.starts_with(&bytes) {
                return Err(ArenaError::format(&path, "not an event log (bad header)"));
            }
            // Empty or torn during creation.
            file.set_len(0).map_err(|e| ArenaError::io(&path, e))?;
            file.seek(SeekFrom::Start(0)).map_err(|e| ArenaError::io(&path, e))?;
            file.write_all(&header).map_err(|e| ArenaError::io(&path, e))?;
            file.sync_all().map_err(|e| ArenaError::io(&path, e))?;
            let log = EventLog {
                path,
                file,
                len: LOG_HEADER_LEN,
                last_seq: 0,
                sync,
            };
            return Ok((log, Vec::new(), Recovery::default()));
        }

        let scan = scan(&path, &bytes)?;
        let mut recovery = Recovery {
            records: scan.events.len() as u64,
            truncated_bytes: 0,
        };
        if scan.valid_len < bytes.len() as u64 {
            recovery.truncated_bytes = bytes.len() as u64 - scan.valid_len;
            file.set_len(scan.valid_len).map_err(|e| ArenaError::io(&path, e))?;
            file.sync_all().map_err(|e| ArenaError::io(&path, e))?;
        }
        file.seek(SeekFrom::Start(scan.valid_len))
            .map_err(|e| ArenaError::io(&path, e))?;
        let last_seq = scan.events.last().map_or(0, |e| e.seq_no);
        let log = EventLog {
            path,
            file,
            len: scan.valid_len,
            last_seq,
            sync,
        };
        Ok((log, scan.events, recovery))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    /// Validates and appends one event. The record is durable (under
    /// [`SyncPolicy::Always`]) before the sequence number is returned. An
    /// invalid event leaves the log untouched.
    pub fn append(&mut self, event: &Event) -> Result<u64> {
        event.validate()?;
        let seq = self.last_seq + 1;
        let record = encode_record(seq, event)?;
        if let Err(e) = self.write_record(&record) {
            // Roll back a partial write so later appends stay well-formed.
            let _ = self.file.set_len(self.len);
            let _ = self.file.seek(SeekFrom::Start(self.len));
            return Err(ArenaError::io(&self.path, e));
        }
        self.len += record.len() as u64;
        self.last_seq = seq;
        Ok(seq)
    }

    fn write_record(&mut self, record: &[u8]) -> std::io::Result<()> {
        self.file.write_all(record)?;
        if self.sync == SyncPolicy::Always {
            self.file.sync_data()?;
        }
        Ok(())
    }
}

fn header_bytes() -> Vec<u8> {
    let mut h = LOG_MAGIC.to_vec();
    h.extend_from_slice(&LOG_VERSION.to_le_bytes());
    h
}

/// Frames one event as an on-disk record.
pub fn encode_record(seq_no: u64, event: &Event) -> Result<Vec<u8>> {
    let payload = serde_json::to_vec(event)?;
    let mut body = Vec::with_capacity(8 + payload.len());
    body.extend_from_slice(&seq_no.to_le_bytes());
    body.extend_from_slice(&payload);
    let body_len = u32::try_from(body.len())
        .map_err(|_| ArenaError::invalid("event", "event too large for one record"))?;
    let mut out = Vec::with_capacity(RECORD_PREFIX + body.len());
    out.extend_from_slice(&body_len.to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

struct Scan {
    events: Vec<LoggedEvent>,
    valid_len: u64,
}

fn scan(path: &Path, bytes: &[u8]) -> Result<Scan> {
    if bytes[..8] != LOG_MAGIC {
        return Err(ArenaError::format(path, "not an event log (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != LOG_VERSION {
        return Err(ArenaError::format(path, format!("unsupported log version {version}")));
    }
    let mut pos = LOG_HEADER_LEN as usize;
    let mut events = Vec::new();
    while pos < bytes.len() {
        let rest = &bytes[pos..];
        if rest.len() < RECORD_PREFIX {
            break;
        }
        let body_len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(rest[4..8].try_into().unwrap());
        let end = RECORD_PREFIX + body_len;
        if rest.len() < end {
            break;
        }
        let body = &rest[RECORD_PREFIX..end];
        if crc32fast::hash(body) != crc {
            if rest.len() == end {
                break;
            }
            return Err(ArenaError::format(
                path,
                format!("checksum mismatch in record at byte {pos}"),
            ));
        }
        if body.len() < 8 {
            return Err(ArenaError::format(path, format!("short record at byte {pos}")));
        }
        let seq_no = u64::from_le_bytes(body[..8].try_into().unwrap());
        let expected = events.len() as u64 + 1;
        if seq_no != expected {
            return Err(ArenaError::format(
                path,
                format!("sequence gap at byte {pos}: expected {expected}, found {seq_no}"),
            ));
        }
        let event: Event = serde_json::from_slice(&body[8..])
            .map_err(|e| ArenaError::format(path, format!("record {seq_no}: {e}")))?;
        events.push(LoggedEvent { seq_no, event });
        pos += end;
    }
    Ok(Scan {
        events,
        valid_len: pos as u64,
    })
}

/// Reads the durable prefix of a log without modifying the file. Safe to call
/// while a writer is appending: a record still being written is ignored.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LoggedEvent>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| ArenaError::io(path, e))?;
    if (bytes.len() as u64) < LOG_HEADER_LEN {
        if header_bytes().starts_with(&bytes) {
            return Ok(Vec::new());
        }
        return Err(ArenaError::format(path, "not an event log (bad header)"));
    }
    Ok(scan(path, &bytes)?.events)
}

/// Writes a complete log in one pass. Used for exports and fixtures.
pub fn write_log(path: impl AsRef<Path>, events: &[Event]) -> Result<()> {
    let path = path.as_ref();
    let mut out = header_bytes();
    for (i, e) in events.iter().enumerate() {
        e.validate()?;
        out.extend_from_slice(&encode_record(i as u64 + 1, e)?);
    }
    std::fs::write(path, out).map_err(|e| ArenaError::io(path, e))
}
