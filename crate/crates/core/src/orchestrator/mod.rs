//! The turn pipeline: take a player message from either platform, persist
//! it, pull the recent cross-platform history, build and render the prompt,
//! ask the backend, persist the reply and hand it back.
//!
//! Turns of one player run strictly one after another on a per-user lane;
//! different players never wait on each other.

pub mod gateway;
pub mod http;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::domain::{
    Content, DialogueRecord, FavorabilityRules, FavorabilityState, NewRecord, NpcProfile, Platform,
    RecordId, Score, SpeakerKind, Tier, UserId, MAX_CONTENT_CHARS,
};
use crate::error::{DomainError, LlmError, StoreError};
use crate::llm::LlmBackend;
use crate::prompt::{build_prompt, estimate_tokens, render};
use crate::store::{DialogueStore, DEFAULT_WINDOW_ROUNDS};

pub const MAX_HISTORY_LIMIT: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InboundMessage {
    pub user_id: UserId,
    pub platform: Platform,
    pub content: Content,
}

impl InboundMessage {
    /// Validates raw input. Surrounding whitespace is trimmed off the content.
    pub fn new(user_id: &str, platform: Platform, content: &str) -> Result<Self, DomainError> {
        Ok(Self {
            user_id: UserId::new(user_id)?,
            platform,
            content: Content::new(content.trim())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NpcReply {
    pub content: String,
    pub favorability: u8,
    pub tier: Tier,
    pub platform: Platform,
    pub record_id: RecordId,
}

/// Everything one completed turn produced, for replay and diagnostics.
#[derive(Debug, Clone)]
pub struct Turn {
    pub reply: NpcReply,
    pub user_record: DialogueRecord,
    pub npc_record: DialogueRecord,
    pub prompt: String,
    pub prompt_tokens: usize,
    pub unmatched: bool,
}

#[derive(Debug, Error)]
pub enum TurnError {
    #[error(transparent)]
    Invalid(#[from] DomainError),
    #[error("limit must be between 1 and {MAX_HISTORY_LIMIT}, got {0}")]
    InvalidLimit(usize),
    #[error(transparent)]
    Store(#[from] StoreError),
    /// The player's message is stored; the reply is not.
    #[error("{source}")]
    Backend {
        source: LlmError,
        user_record: RecordId,
        prompt: String,
    },
}

impl TurnError {
    pub fn retryable(&self) -> bool {
        matches!(self, TurnError::Backend { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserState {
    pub favorability: u8,
    pub tier: Tier,
    pub last_platform: Option<Platform>,
    pub message_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrchestratorSettings {
    pub favorability: FavorabilityRules,
    pub window_rounds: usize,
}

impl Default for OrchestratorSettings {
    fn default() -> Self {
        Self {
            favorability: FavorabilityRules::default(),
            window_rounds: DEFAULT_WINDOW_ROUNDS,
        }
    }
}

type Lane = Arc<tokio::sync::Mutex<()>>;

pub struct Orchestrator {
    store: Arc<dyn DialogueStore>,
    backend: Arc<dyn LlmBackend>,
    profile: NpcProfile,
    settings: OrchestratorSettings,
    clock: Arc<dyn Clock>,
    lanes: Mutex<HashMap<UserId, Lane>>,
}

impl std::fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Orchestrator")
            .field("npc", &self.profile.name)
            .field("backend", &self.backend.describe())
            .field("settings", &self.settings)
            .finish_non_exhaustive()
    }
}

async fn append(
    store: &Arc<dyn DialogueStore>,
    record: NewRecord,
) -> Result<DialogueRecord, StoreError> {
    let store = Arc::clone(store);
    tokio::task::spawn_blocking(move || store.append(record))
        .await
        .map_err(|e| StoreError::Unavailable(format!("append task failed: {e}")))?
}

fn reply_content(text: &str) -> Result<Content, LlmError> {
    let text = text.trim();
    let text = match text.char_indices().nth(MAX_CONTENT_CHARS) {
        Some((cut, _)) => &text[..cut],
        None => text,
    };
    Content::new(text).map_err(|e| LlmError::Protocol(format!("unusable reply: {e}")))
}

impl Orchestrator {
    pub fn new(
        store: Arc<dyn DialogueStore>,
        backend: Arc<dyn LlmBackend>,
        profile: NpcProfile,
    ) -> Self {
        Self {
            store,
            backend,
            profile,
            settings: OrchestratorSettings::default(),
            clock: Arc::new(SystemClock),
            lanes: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_settings(mut self, settings: OrchestratorSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn store(&self) -> &Arc<dyn DialogueStore> {
        &self.store
    }

    pub fn profile(&self) -> &NpcProfile {
        &self.profile
    }

    pub fn settings(&self) -> &OrchestratorSettings {
        &self.settings
    }

    fn lane(&self, user: &UserId) -> Lane {
        let mut lanes = self.lanes.lock().unwrap_or_else(|e| e.into_inner());
        Arc::clone(lanes.entry(user.clone()).or_default())
    }

    fn release_lane(&self, user: &UserId, lane: Lane) {
        let mut lanes = self.lanes.lock().unwrap_or_else(|e| e.into_inner());
        // Only the map and this caller hold it: nobody is queued behind us.
        if Arc::strong_count(&lane) == 2 {
            lanes.remove(user);
        }
    }

    pub async fn handle_message(&self, msg: InboundMessage) -> Result<NpcReply, TurnError> {
        self.run_turn(msg).await.map(|turn| turn.reply)
    }

    /// Runs one turn and returns the full trace, including the rendered prompt.
    pub async fn run_turn(&self, msg: InboundMessage) -> Result<Turn, TurnError> {
        let lane = self.lane(&msg.user_id);
        let result = {
            let _turn = lane.lock().await;
            self.turn_locked(msg.clone()).await
        };
        self.release_lane(&msg.user_id, lane);
        result
    }

    async fn turn_locked(&self, msg: InboundMessage) -> Result<Turn, TurnError> {
        let rules = &self.settings.favorability;
        let previous = self.store.latest_favorability(&msg.user_id)?;
        let state =
            FavorabilityState::new(previous, rules).update(msg.platform, SpeakerKind::User, rules);

        let user_record = append(
            &self.store,
            NewRecord {
                user_id: msg.user_id.clone(),
                character: SpeakerKind::User,
                content: msg.content.clone(),
                haogandu: state.score(),
                platform: msg.platform,
                timestamp: self.clock.now(),
            },
        )
        .await?;

        let window = self.store.recent_history_before(
            &msg.user_id,
            Some(user_record.sequence),
            self.settings.window_rounds,
        )?;
        let bundle = build_prompt(
            &self.profile,
            &state,
            &msg.user_id,
            msg.platform,
            &window,
            &msg.content,
        );
        let prompt = render(&bundle);
        let prompt_tokens = estimate_tokens(&prompt);
        tracing::debug!(
            user = %msg.user_id,
            platform = %msg.platform,
            rounds = window.len(),
            prompt_tokens,
            "prompt built"
        );

        let backend_failure = |source: LlmError, prompt: String| TurnError::Backend {
            source,
            user_record: user_record.record_id.clone(),
            prompt,
        };
        let completion = match self.backend.complete(&prompt).await {
            Ok(c) => c,
            Err(e) => return Err(backend_failure(e, prompt)),
        };
        let content = match reply_content(&completion.text) {
            Ok(c) => c,
            Err(e) => return Err(backend_failure(e, prompt)),
        };

        let npc_record = append(
            &self.store,
            NewRecord {
                user_id: msg.user_id.clone(),
                character: SpeakerKind::Npc,
                content,
                haogandu: state.score(),
                platform: msg.platform,
                timestamp: self.clock.now(),
            },
        )
        .await?;

        Ok(Turn {
            reply: NpcReply {
                content: npc_record.content.as_str().to_string(),
                favorability: state.score().value(),
                tier: state.tier(),
                platform: msg.platform,
                record_id: npc_record.record_id.clone(),
            },
            user_record,
            npc_record,
            prompt,
            prompt_tokens,
            unmatched: completion.unmatched(),
        })
    }

    /// The most recent `limit` records, oldest first, across platforms.
    pub fn get_history(
        &self,
        user: &UserId,
        limit: usize,
    ) -> Result<Vec<DialogueRecord>, TurnError> {
        if !(1..=MAX_HISTORY_LIMIT).contains(&limit) {
            return Err(TurnError::InvalidLimit(limit));
        }
        Ok(self.store.tail(user, None, limit)?)
    }

    /// Derived from the store on every call.
    pub fn get_state(&self, user: &UserId) -> Result<UserState, TurnError> {
        let latest = self.store.latest(user)?;
        let score = latest.as_ref().map_or(Score::MIN, |r| r.haogandu);
        Ok(UserState {
            favorability: score.value(),
            tier: self.settings.favorability.boundaries.tier_of(score),
            last_platform: latest.map(|r| r.platform),
            message_count: self.store.record_count(user)?,
        })
    }
}
