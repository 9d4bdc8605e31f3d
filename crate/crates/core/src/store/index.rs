use std::collections::{HashMap, HashSet};

use crate::domain::{DialogueRecord, NewRecord, RecordId, UserId};
use crate::error::StoreError;

use super::Transcript;

/// Per-user record lists plus the global id set. Both backends keep one.
#[derive(Debug, Default)]
pub(crate) struct Index {
    users: HashMap<UserId, Vec<DialogueRecord>>,
    ids: HashSet<RecordId>,
}

impl Index {
    /// Builds the record `new` would become if appended now.
    pub fn prepare(&self, mut new: NewRecord) -> DialogueRecord {
        let existing = self.users.get(&new.user_id);
        let sequence = existing.map_or(0, Vec::len) as u64 + 1;
        if let Some(last) = existing.and_then(|r| r.last()) {
            new.timestamp = new.timestamp.max(last.timestamp);
        }
        let mut record = DialogueRecord::from_new(new, sequence);
        while self.ids.contains(&record.record_id) {
            record.record_id = RecordId::generate();
        }
        record
    }

    /// Adds a record that must extend its user's sequence by exactly one.
    pub fn insert(&mut self, record: DialogueRecord) -> Result<(), String> {
        let records = self.users.entry(record.user_id.clone()).or_default();
        let expected = records.len() as u64 + 1;
        if record.sequence != expected {
            return Err(format!(
                "user {} expected sequence {expected}, found {}",
                record.user_id, record.sequence
            ));
        }
        if let Some(last) = records.last() {
            if record.timestamp < last.timestamp {
                return Err(format!(
                    "user {} timestamp goes backwards at sequence {}",
                    record.user_id, record.sequence
                ));
            }
        }
        if !self.ids.insert(record.record_id.clone()) {
            return Err(format!("duplicate record id {}", record.record_id));
        }
        records.push(record);
        Ok(())
    }

    pub fn check_import(&self, transcript: &Transcript) -> Result<(), StoreError> {
        transcript.validate()?;
        for user in transcript.users() {
            if self.users.get(&user).is_some_and(|r| !r.is_empty()) {
                return Err(StoreError::UserNotEmpty(user));
            }
        }
        if let Some(dup) = transcript
            .records
            .iter()
            .find(|r| self.ids.contains(&r.record_id))
        {
            return Err(StoreError::InvalidTranscript(format!(
                "record id {} already stored",
                dup.record_id
            )));
        }
        Ok(())
    }

    pub fn tail(&self, user: &UserId, before: Option<u64>, n: usize) -> Vec<DialogueRecord> {
        let Some(records) = self.users.get(user) else {
            return Vec::new();
        };
        // sequence s lives at position s - 1
        let end = before.map_or(records.len(), |b| {
            (b.saturating_sub(1) as usize).min(records.len())
        });
        let start = end.saturating_sub(n);
        records[start..end].to_vec()
    }

    pub fn count(&self, user: &UserId) -> u64 {
        self.users.get(user).map_or(0, Vec::len) as u64
    }

    pub fn users(&self) -> Vec<UserId> {
        self.users
            .iter()
            .filter(|(_, r)| !r.is_empty())
            .map(|(u, _)| u.clone())
            .collect()
    }

    pub fn remove(&mut self, user: Option<&UserId>) -> usize {
        let removed: Vec<DialogueRecord> = match user {
            Some(user) => self.users.remove(user).unwrap_or_default(),
            None => self.users.drain().flat_map(|(_, r)| r).collect(),
        };
        for record in &removed {
            self.ids.remove(&record.record_id);
        }
        removed.len()
    }

    pub fn all_records(&self) -> impl Iterator<Item = &DialogueRecord> {
        self.users.values().flatten()
    }
}
