use std::path::PathBuf;

use thiserror::Error;

use crate::domain::UserId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("user id is empty")]
    EmptyUserId,
    #[error("user id is {0} characters, limit is 128")]
    UserIdTooLong(usize),
    #[error("content is empty")]
    EmptyContent,
    #[error("content is {0} characters, limit is 4000")]
    ContentTooLong(usize),
    #[error("favorability {0} is outside 0..=100")]
    ScoreOutOfRange(i64),
    #[error("unknown platform `{0}` (expected `game` or `discord`)")]
    UnknownPlatform(String),
    #[error("tier boundaries must satisfy 0 < friendly_from ({friendly_from}) < warm_from ({warm_from}) <= 100")]
    InvalidTierBoundaries { friendly_from: u8, warm_from: u8 },
    #[error("malformed record id `{0}`")]
    MalformedRecordId(String),
    #[error("malformed timestamp `{0}`")]
    MalformedTimestamp(String),
    #[error("invalid npc profile: {0}")]
    InvalidProfile(String),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("store log {path} is corrupt at line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("transcript line {line}: {reason}")]
    MalformedTranscript { line: usize, reason: String },
    #[error("transcript rejected: {0}")]
    InvalidTranscript(String),
    #[error("user {0} already has history; import needs an empty history")]
    UserNotEmpty(UserId),
    #[error("store unavailable: {0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("llm backend unavailable: {0}")]
    Unavailable(String),
    #[error("llm protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}
