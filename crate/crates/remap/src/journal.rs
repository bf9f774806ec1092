//! Append-only JSON-lines journal.
//!
//! Each line is `{"seq":N,"event":{...}}` followed by `\n`. A trailing line
//! that is incomplete or does not parse is a torn write: it is dropped (and
//! truncated away when the journal is opened for writing).

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::event::Event;

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path} line {line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error("{path} line {line}: sequence number {found}, expected {expected}")]
    Sequence { path: String, line: usize, expected: u64, found: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub seq: u64,
    pub event: Event,
}

/// Result of decoding journal bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub entries: Vec<Entry>,
    /// Length of the valid prefix in bytes.
    pub valid_len: u64,
    /// A torn final record was dropped.
    pub torn: bool,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> JournalError + '_ {
    move |source| JournalError::Io { path: path.display().to_string(), source }
}

/// Decodes journal bytes. Only the final line may be damaged.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Decoded, JournalError> {
    let mut entries = Vec::new();
    let mut offset = 0usize;
    let mut line_no = 0;
    while offset < bytes.len() {
        line_no += 1;
        let rest = &bytes[offset..];
        let (line, complete) = match rest.iter().position(|&b| b == b'\n') {
            Some(end) => (&rest[..end], true),
            None => (rest, false),
        };
        let parsed = serde_json::from_slice::<Entry>(line);
        let is_last = offset + line.len() + usize::from(complete) >= bytes.len();
        match parsed {
            Ok(entry) if complete => {
                let expected = entries.len() as u64 + 1;
                if entry.seq != expected {
                    return Err(JournalError::Sequence {
                        path: path.display().to_string(),
                        line: line_no,
                        expected,
                        found: entry.seq,
                    });
                }
                entries.push(entry);
                offset += line.len() + 1;
            }
            Ok(_) => return Ok(Decoded { entries, valid_len: offset as u64, torn: true }),
            Err(_) if is_last => return Ok(Decoded { entries, valid_len: offset as u64, torn: true }),
            Err(e) => {
                return Err(JournalError::Corrupt {
                    path: path.display().to_string(),
                    line: line_no,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(Decoded { entries, valid_len: offset as u64, torn: false })
}

pub fn read(path: &Path) -> Result<Decoded, JournalError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes, path)
}

pub fn encode_line(entry: &Entry) -> String {
    let mut line = serde_json::to_string(entry).expect("events serialize");
    line.push('\n');
    line
}

/// Writer half of a journal. Appends are one `write` of a whole line followed
/// by `fsync`.
#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

impl Journal {
    /// Creates an empty journal; fails if the file exists.
    pub fn create(path: &Path) -> Result<Self, JournalError> {
        let file = OpenOptions::new().append(true).create_new(true).open(path).map_err(io_err(path))?;
        Ok(Journal { path: path.to_path_buf(), file, next_seq: 1 })
    }

    /// Opens an existing journal for appending, truncating a torn tail.
    pub fn open(path: &Path) -> Result<(Self, Vec<Entry>), JournalError> {
        let decoded = read(path)?;
        if decoded.torn {
            log::warn!("{}: dropping torn final record at byte {}", path.display(), decoded.valid_len);
            let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
            f.set_len(decoded.valid_len).map_err(io_err(path))?;
            f.sync_all().map_err(io_err(path))?;
        }
        let file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        let next_seq = decoded.entries.len() as u64 + 1;
        Ok((Journal { path: path.to_path_buf(), file, next_seq }, decoded.entries))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn append(&mut self, event: &Event) -> Result<u64, JournalError> {
        let seq = self.next_seq;
        let line = encode_line(&Entry { seq, event: event.clone() });
        self.file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))?;
        self.next_seq += 1;
        Ok(seq)
    }
}

/// Writes `events` as a fresh journal at `path` via a temporary file and rename.
pub fn write_atomic(path: &Path, events: &[Event]) -> Result<(), JournalError> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        let mut buf = String::new();
        for (i, event) in events.iter().enumerate() {
            buf.push_str(&encode_line(&Entry { seq: i as u64 + 1, event: event.clone() }));
        }
        f.write_all(buf.as_bytes()).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    if let Some(dir) = path.parent() {
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}
