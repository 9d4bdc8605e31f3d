use std::sync::RwLock;

use crate::domain::{DialogueRecord, NewRecord, UserId};
use crate::error::StoreError;

use super::index::Index;
use super::{DialogueStore, Transcript};

/// Volatile backend, used by tests and `replay --in-memory`.
#[derive(Debug, Default)]
pub struct InMemoryStore {
    index: RwLock<Index>,
}

impl InMemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

fn poisoned() -> StoreError {
    StoreError::Unavailable("store lock poisoned".into())
}

impl DialogueStore for InMemoryStore {
    fn append(&self, record: NewRecord) -> Result<DialogueRecord, StoreError> {
        let mut index = self.index.write().map_err(|_| poisoned())?;
        let record = index.prepare(record);
        index
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
        let mut index = self.index.write().map_err(|_| poisoned())?;
        index.check_import(transcript)?;
        for record in &transcript.records {
            index
                .insert(record.clone())
                .map_err(StoreError::InvalidTranscript)?;
        }
        Ok(transcript.len())
    }

    fn purge(&self, user: Option<&UserId>) -> Result<usize, StoreError> {
        Ok(self.index.write().map_err(|_| poisoned())?.remove(user))
    }
}
