use std::collections::HashSet;

use crate::domain::{DialogueRecord, UserId};
use crate::error::StoreError;

/// Ordered record list used for export, import, inspection and replay.
///
/// On disk a transcript is one JSON object per line with the fields
/// `record_id, user_id, character, content, haogandu, platform, timestamp,
/// sequence` in that order, UTF-8, `\n`-terminated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub records: Vec<DialogueRecord>,
}

impl Transcript {
    pub fn new(records: Vec<DialogueRecord>) -> Self {
        Self { records }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&record_line(record));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, StoreError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record =
                serde_json::from_str(line).map_err(|e| StoreError::MalformedTranscript {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            records.push(record);
        }
        Ok(Self { records })
    }

    pub fn users(&self) -> Vec<UserId> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(&r.user_id))
            .map(|r| r.user_id.clone())
            .collect()
    }

    /// Checks ordering by (user_id, sequence), contiguous sequences from 1,
    /// non-decreasing timestamps per user and unique record ids.
    pub fn validate(&self) -> Result<(), StoreError> {
        let mut ids = HashSet::new();
        let mut previous: Option<&DialogueRecord> = None;
        for record in &self.records {
            if !ids.insert(&record.record_id) {
                return Err(invalid(format!("duplicate record id {}", record.record_id)));
            }
            match previous {
                Some(prev) if prev.user_id == record.user_id => {
                    if record.sequence != prev.sequence + 1 {
                        return Err(invalid(format!(
                            "user {} jumps from sequence {} to {}",
                            record.user_id, prev.sequence, record.sequence
                        )));
                    }
                    if record.timestamp < prev.timestamp {
                        return Err(invalid(format!(
                            "user {} timestamp goes backwards at sequence {}",
                            record.user_id, record.sequence
                        )));
                    }
                }
                Some(prev) if prev.user_id > record.user_id => {
                    return Err(invalid(format!(
                        "records are not sorted by user id ({} after {})",
                        record.user_id, prev.user_id
                    )));
                }
                _ => {
                    if record.sequence != 1 {
                        return Err(invalid(format!(
                            "user {} starts at sequence {}",
                            record.user_id, record.sequence
                        )));
                    }
                }
            }
            previous = Some(record);
        }
        Ok(())
    }
}

pub(crate) fn record_line(record: &DialogueRecord) -> String {
    serde_json::to_string(record).expect("records always serialize")
}

fn invalid(reason: String) -> StoreError {
    StoreError::InvalidTranscript(reason)
}
