use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use crate::domain::{DialogueRecord, NewRecord, UserId};
use crate::error::StoreError;

use super::index::Index;
use super::transcript::record_line;
use super::{DialogueStore, Transcript};

/// How hard an append pushes bytes towards the disk before returning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Durability {
    /// `fdatasync` after every append.
    #[default]
    Sync,
    /// Hand the bytes to the OS only. Survives a process kill, not a power cut.
    Flush,
}

struct LogFile {
    file: File,
    len: u64,
}

/// Single-file append log. Each line is one record in transcript format; the
/// per-user index is rebuilt from the log on open.
pub struct FileStore {
    path: PathBuf,
    durability: Durability,
    log: Mutex<LogFile>,
    index: RwLock<Index>,
}

impl std::fmt::Debug for FileStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FileStore")
            .field("path", &self.path)
            .field("durability", &self.durability)
            .finish_non_exhaustive()
    }
}

fn poisoned() -> StoreError {
    StoreError::Unavailable("store lock poisoned".into())
}

impl FileStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_with(path, Durability::default())
    }

    /// Opens (or creates) the log and rebuilds the index. A trailing partial
    /// line left by a crash mid-append is cut off; any other malformed line
    /// is reported as corruption.
    pub fn open_with(path: impl AsRef<Path>, durability: Durability) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;

        let mut index = Index::default();
        let mut committed = 0usize;
        for (line_no, chunk) in bytes.split_inclusive(|b| *b == b'\n').enumerate() {
            if chunk.last() != Some(&b'\n') {
                tracing::warn!(
                    path = %path.display(),
                    bytes = chunk.len(),
                    "dropping torn trailing line from dialogue log"
                );
                break;
            }
            committed += chunk.len();
            let line = &chunk[..chunk.len() - 1];
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let corrupt = |reason: String| StoreError::Corrupt {
                path: path.clone(),
                line: line_no + 1,
                reason,
            };
            let record: DialogueRecord =
                serde_json::from_slice(line).map_err(|e| corrupt(e.to_string()))?;
            index.insert(record).map_err(corrupt)?;
        }
        if committed < bytes.len() {
            file.set_len(committed as u64)?;
            file.sync_data()?;
        }

        Ok(Self {
            path,
            durability,
            log: Mutex::new(LogFile {
                file,
                len: committed as u64,
            }),
            index: RwLock::new(index),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write_lines(&self, log: &mut LogFile, payload: &[u8]) -> Result<(), StoreError> {
        let result = log
            .file
            .write_all(payload)
            .and_then(|_| match self.durability {
                Durability::Sync => log.file.sync_data(),
                Durability::Flush => log.file.flush(),
            });
        match result {
            Ok(()) => {
                log.len += payload.len() as u64;
                Ok(())
            }
            Err(e) => {
                // Drop whatever part of the payload made it out so the next
                // append starts on a clean line.
                if let Err(undo) = log.file.set_len(log.len) {
                    tracing::error!(error = %undo, "could not roll back partial log write");
                }
                Err(e.into())
            }
        }
    }
}

impl DialogueStore for FileStore {
    fn append(&self, record: NewRecord) -> Result<DialogueRecord, StoreError> {
        let mut log = self.log.lock().map_err(|_| poisoned())?;
        let record = self.index.read().map_err(|_| poisoned())?.prepare(record);
        let mut line = record_line(&record).into_bytes();
        line.push(b'\n');
        self.write_lines(&mut log, &line)?;
        self.index
            .write()
            .map_err(|_| poisoned())?
            .insert(record.clone())
            .map_err(StoreError::Unavailable)?;
        Ok(record)
    }

    fn tail(
        &self,
        user: &UserId,
        before: Option<u64>,
        n: usize,
    ) -> Result<Vec<DialogueRecord>, StoreError> {
        Ok(self
            .index
            .read()
            .map_err(|_| poisoned())?
            .tail(user, before, n))
    }

    fn record_count(&self, user: &UserId) -> Result<u64, StoreError> {
        Ok(self.index.read().map_err(|_| poisoned())?.count(user))
    }

    fn users(&self) -> Result<Vec<UserId>, StoreError> {
        Ok(self.index.read().map_err(|_| poisoned())?.users())
    }

    fn import_transcript(&self, transcript: &Transcript) -> Result<usize, StoreError> {
        let mut log = self.log.lock().map_err(|_| poisoned())?;
        self.index
            .read()
            .map_err(|_| poisoned())?
            .check_import(transcript)?;
        if transcript.is_empty() {
            return Ok(0);
        }
        self.write_lines(&mut log, transcript.to_jsonl().as_bytes())?;
        let mut index = self.index.write().map_err(|_| poisoned())?;
        for record in &transcript.records {
            index
                .insert(record.clone())
                .map_err(StoreError::InvalidTranscript)?;
        }
        Ok(transcript.len())
    }

    fn purge(&self, user: Option<&UserId>) -> Result<usize, StoreError> {
        let mut log = self.log.lock().map_err(|_| poisoned())?;
        let mut index = self.index.write().map_err(|_| poisoned())?;

        let mut keep: Vec<&DialogueRecord> = index
            .all_records()
            .filter(|r| user.is_some_and(|u| &r.user_id != u))
            .collect();
        keep.sort_by(|a, b| (&a.user_id, a.sequence).cmp(&(&b.user_id, b.sequence)));
        let mut payload = String::new();
        for record in keep {
            payload.push_str(&record_line(record));
            payload.push('\n');
        }

        let tmp = self.path.with_extension("rewrite");
        {
            let mut out = File::create(&tmp)?;
            out.write_all(payload.as_bytes())?;
            out.sync_all()?;
        }
        fs::rename(&tmp, &self.path)?;
        log.file = OpenOptions::new()
            .read(true)
            .append(true)
            .open(&self.path)?;
        log.len = payload.len() as u64;

        Ok(index.remove(user))
    }

    fn flush(&self) -> Result<(), StoreError> {
        let log = self.log.lock().map_err(|_| poisoned())?;
        log.file.sync_all()?;
        Ok(())
    }
}
