//! Cross-platform NPC dialogue service.
//!
//! One LLM-driven character talks to a player both inside the game and in an
//! off-game chat client, with a single shared memory:
//!
//! 1. a player message arrives from either platform,
//! 2. it is stored with the player's favorability snapshot,
//! 3. the last six rounds of dialogue (from both platforms) are read back,
//! 4. a prompt is assembled and sent to the model,
//! 5. the reply is stored and returned to the platform it came from.
//!
//! Favorability only grows through in-game conversation; chatting off-game
//! never changes it.

pub mod clock;
pub mod config;
pub mod domain;
pub mod error;
pub mod llm;
pub mod orchestrator;
pub mod prompt;
pub mod replay;
pub mod store;

pub use domain::{
    tier_of, tone_for, update_favorability, Content, DialogueRecord, FavorabilityRules,
    FavorabilityState, NpcProfile, Platform, Score, SpeakerKind, Tier, UserId,
};
pub use error::{ConfigError, DomainError, LlmError, StoreError};
pub use orchestrator::{InboundMessage, NpcReply, Orchestrator, OrchestratorSettings, TurnError};
