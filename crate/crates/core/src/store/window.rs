use crate::domain::{DialogueRecord, SpeakerKind};

pub const DEFAULT_WINDOW_ROUNDS: usize = 6;

/// One exchange: a user message and the NPC reply to it, if any.
///
/// An NPC line that does not directly follow an unanswered user message is
/// kept as a round of its own (`user` is `None`). The orchestrator never
/// writes such lines, but imported transcripts may contain them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Round {
    pub user: Option<DialogueRecord>,
    pub reply: Option<DialogueRecord>,
}

impl Round {
    pub fn records(&self) -> impl Iterator<Item = &DialogueRecord> {
        self.user.iter().chain(self.reply.iter())
    }
}

/// Pairs records (ordered by sequence) into rounds.
pub fn group_rounds(records: impl IntoIterator<Item = DialogueRecord>) -> Vec<Round> {
    let mut rounds: Vec<Round> = Vec::new();
    for record in records {
        match record.character {
            SpeakerKind::User => rounds.push(Round {
                user: Some(record),
                reply: None,
            }),
            SpeakerKind::Npc => match rounds.last_mut() {
                Some(round) if round.user.is_some() && round.reply.is_none() => {
                    round.reply = Some(record)
                }
                _ => rounds.push(Round {
                    user: None,
                    reply: Some(record),
                }),
            },
        }
    }
    rounds
}

/// The most recent rounds of a user's dialogue, oldest first, across all
/// platforms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HistoryWindow {
    pub rounds: Vec<Round>,
}

impl HistoryWindow {
    /// Groups `records` and keeps the last `max_rounds` rounds.
    pub fn from_records(records: Vec<DialogueRecord>, max_rounds: usize) -> Self {
        let mut rounds = group_rounds(records);
        let excess = rounds.len().saturating_sub(max_rounds);
        rounds.drain(..excess);
        Self { rounds }
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn records(&self) -> impl Iterator<Item = &DialogueRecord> {
        self.rounds.iter().flat_map(Round::records)
    }
}
