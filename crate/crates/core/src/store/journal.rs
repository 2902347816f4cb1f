//! Append-only JSON-lines journal.
//!
//! One record per line: `{"kind": ..., "payload": ..., "saved_at": ..., "seq": ...}`.
//! A record counts only once its terminating newline is on disk; a trailing
//! fragment without one is a torn write and is discarded on replay (and cut
//! off when the journal is reopened for writing). Any other unreadable line
//! is corruption and fails the replay.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::transcript::{Conversation, ExampleRef};
use super::StoreError;
use crate::rules::{Origin, SelectedValue};

/// One category's new live value for an example, or `None` when retracted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentChange {
    pub category_id: String,
    pub value: Option<SelectedValue>,
    pub origin: Origin,
    pub version: u64,
}

/// Every category change caused by one labeling action, written atomically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentBatch {
    pub annotator_id: String,
    pub example: ExampleRef,
    pub changes: Vec<AssignmentChange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResumePosition {
    pub annotator_id: String,
    pub conversation_id: String,
    pub utterance_id: String,
    pub updated_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportBatch {
    pub conversations: Vec<Conversation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum RecordBody {
    Assignment(AssignmentBatch),
    Resume(ResumePosition),
    Import(ImportBatch),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalRecord {
    #[serde(flatten)]
    pub body: RecordBody,
    pub saved_at: u64,
    pub seq: u64,
}

/// Parses journal bytes. Returns the complete records and the byte length
/// they occupy (everything after it is a torn tail).
pub fn parse_records(bytes: &[u8]) -> Result<(Vec<JournalRecord>, u64), StoreError> {
    let mut records = Vec::new();
    let mut offset = 0usize;
    let mut line_no = 0usize;
    while let Some(pos) = bytes[offset..].iter().position(|&b| b == b'\n') {
        line_no += 1;
        let line = &bytes[offset..offset + pos];
        offset += pos + 1;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let record: JournalRecord =
            serde_json::from_slice(line).map_err(|e| StoreError::Corrupt {
                line: line_no,
                message: e.to_string(),
            })?;
        let expected = records.len() as u64 + 1;
        if record.seq != expected {
            return Err(StoreError::Corrupt {
                line: line_no,
                message: format!("sequence {} where {expected} was expected", record.seq),
            });
        }
        records.push(record);
    }
    Ok((records, offset as u64))
}

/// Reads every complete record of the journal at `path` without modifying it.
pub fn replay(path: &Path) -> Result<Vec<JournalRecord>, StoreError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    Ok(parse_records(&bytes)?.0)
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
    len: u64,
    next_seq: u64,
    sync: bool,
    fail_next: bool,
}

impl Journal {
    /// Opens (creating if needed) the journal, replays it and truncates any
    /// torn tail so new records start on a clean line.
    pub fn open(path: &Path, sync: bool) -> Result<(Journal, Vec<JournalRecord>), StoreError> {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (records, good_len) = parse_records(&bytes)?;
        if good_len < bytes.len() as u64 {
            file.set_len(good_len)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::Start(good_len))?;
        let next_seq = records.len() as u64 + 1;
        Ok((
            Journal {
                path: path.to_path_buf(),
                file,
                len: good_len,
                next_seq,
                sync,
                fail_next: false,
            },
            records,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Bytes of complete records on disk.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Makes the next append write half a record and then fail, as a crash
    /// in the middle of a write would.
    #[doc(hidden)]
    pub fn fail_next_append(&mut self) {
        self.fail_next = true;
    }

    /// Appends one record. On failure the file is cut back to its previous
    /// length, so the journal never keeps a partial record.
    pub fn append(&mut self, body: RecordBody, saved_at: u64) -> Result<JournalRecord, StoreError> {
        let record = JournalRecord {
            body,
            saved_at,
            seq: self.next_seq,
        };
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        match self.write_line(&line) {
            Ok(()) => {
                self.len += line.len() as u64;
                self.next_seq += 1;
                Ok(record)
            }
            Err(e) => {
                let _ = self.file.set_len(self.len);
                let _ = self.file.seek(SeekFrom::Start(self.len));
                Err(e.into())
            }
        }
    }

    fn write_line(&mut self, line: &[u8]) -> io::Result<()> {
        self.file.seek(SeekFrom::Start(self.len))?;
        if std::mem::take(&mut self.fail_next) {
            self.file.write_all(&line[..line.len() / 2])?;
            return Err(io::Error::other("injected write failure"));
        }
        self.file.write_all(line)?;
        if self.sync {
            self.file.sync_data()?;
        }
        Ok(())
    }
}
