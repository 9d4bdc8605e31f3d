//! Append-only dialogue persistence.
//!
//! Every backend keeps a per-user, gap-free `sequence` starting at 1 and never
//! rewrites a stored record. The one exception is [`DialogueStore::purge`],
//! which only the operator CLI calls.
//!
//! Two backends share the same contract: [`InMemoryStore`] and [`FileStore`]
//! (a single JSON-lines log with an in-memory index rebuilt on open).

mod file;
mod index;
mod memory;
mod transcript;
mod window;

pub use file::{Durability, FileStore};
pub use memory::InMemoryStore;
pub use transcript::Transcript;
pub use window::{group_rounds, HistoryWindow, Round, DEFAULT_WINDOW_ROUNDS};

use crate::domain::{DialogueRecord, NewRecord, Score, UserId};
use crate::error::StoreError;

pub trait DialogueStore: Send + Sync {
    /// Assigns the next sequence number and a fresh record id, persists the
    /// record and returns it. Timestamps older than the user's latest record
    /// are raised to it so per-user time never runs backwards.
    fn append(&self, record: NewRecord) -> Result<DialogueRecord, StoreError>;

    /// The last `n` records of `user` whose sequence is below `before`
    /// (all records when `before` is `None`), oldest first.
    fn tail(
        &self,
        user: &UserId,
        before: Option<u64>,
        n: usize,
    ) -> Result<Vec<DialogueRecord>, StoreError>;

    fn record_count(&self, user: &UserId) -> Result<u64, StoreError>;

    fn users(&self) -> Result<Vec<UserId>, StoreError>;

    /// Validates the whole transcript, then commits all of it or nothing.
    fn import_transcript(&self, transcript: &Transcript) -> Result<usize, StoreError>;

    /// Deletes one user's records, or everyone's. Returns how many went.
    fn purge(&self, user: Option<&UserId>) -> Result<usize, StoreError>;

    fn flush(&self) -> Result<(), StoreError> {
        Ok(())
    }

    fn records(&self, user: &UserId) -> Result<Vec<DialogueRecord>, StoreError> {
        self.tail(user, None, usize::MAX)
    }

    fn latest(&self, user: &UserId) -> Result<Option<DialogueRecord>, StoreError> {
        Ok(self.tail(user, None, 1)?.pop())
    }

    fn latest_favorability(&self, user: &UserId) -> Result<Score, StoreError> {
        Ok(self.latest(user)?.map(|r| r.haogandu).unwrap_or(Score::MIN))
    }

    fn recent_history(
        &self,
        user: &UserId,
        max_rounds: usize,
    ) -> Result<HistoryWindow, StoreError> {
        self.recent_history_before(user, None, max_rounds)
    }

    /// Window of the last `max_rounds` rounds made of records strictly before
    /// sequence `before`. Rounds never straddle the cut.
    fn recent_history_before(
        &self,
        user: &UserId,
        before: Option<u64>,
        max_rounds: usize,
    ) -> Result<HistoryWindow, StoreError> {
        // The last k rounds span at most 2k records; one more record makes
        // the grouping of the first kept round unambiguous.
        let span = max_rounds.saturating_mul(2).saturating_add(1);
        let records = self.tail(user, before, span)?;
        Ok(HistoryWindow::from_records(records, max_rounds))
    }

    fn export_transcript(&self, user: &UserId) -> Result<Transcript, StoreError> {
        Ok(Transcript::new(self.records(user)?))
    }

    fn export_all(&self) -> Result<Transcript, StoreError> {
        let mut users = self.users()?;
        users.sort();
        let mut records = Vec::new();
        for user in &users {
            records.extend(self.records(user)?);
        }
        Ok(Transcript::new(records))
    }
}
