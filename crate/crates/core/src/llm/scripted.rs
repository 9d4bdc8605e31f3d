//! Deterministic rule-matching stand-in for a language model.
//!
//! A script is a JSON-lines file; each non-blank line that does not start
//! with `#` is one rule:
//!
//! ```text
//! {"match": "platform: discord", "reply": "Hmm, maybe if you meet me in the game."}
//! {"match": "(?s)platform: discord.*My name is Song Li", "mode": "regex", "reply": "Hey Song Li!", "once": true}
//! {"match": "## Current message", "fail": "unavailable", "once": true}
//! ```
//!
//! Rules are tried in file order against the whole rendered prompt and the
//! first live match wins. A `once` rule is spent after it fires. `fail`
//! makes the rule answer with an error instead of a reply.

use std::collections::HashSet;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use async_trait::async_trait;
use regex::Regex;
use serde::Deserialize;

use super::{Completion, LlmBackend};
use crate::error::{ConfigError, LlmError};

/// Reply used when no rule matches.
pub const UNMATCHED_REPLY: &str = "...";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    #[default]
    Substring,
    Regex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptFailure {
    Unavailable,
    Protocol,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptOutcome {
    Reply(String),
    Fail(ScriptFailure),
}

#[derive(Debug, Clone)]
enum Matcher {
    Substring(String),
    Regex(Regex),
}

impl Matcher {
    fn is_match(&self, prompt: &str) -> bool {
        match self {
            Matcher::Substring(s) => prompt.contains(s.as_str()),
            Matcher::Regex(re) => re.is_match(prompt),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScriptRule {
    matcher: Matcher,
    pub outcome: ScriptOutcome,
    pub once: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    #[serde(rename = "match")]
    pattern: String,
    #[serde(default)]
    mode: MatchMode,
    reply: Option<String>,
    fail: Option<ScriptFailure>,
    #[serde(default)]
    once: bool,
}

impl ScriptRule {
    pub fn reply(pattern: &str, reply: &str) -> Self {
        Self {
            matcher: Matcher::Substring(pattern.to_string()),
            outcome: ScriptOutcome::Reply(reply.to_string()),
            once: false,
        }
    }

    pub fn fail(pattern: &str, failure: ScriptFailure) -> Self {
        Self {
            matcher: Matcher::Substring(pattern.to_string()),
            outcome: ScriptOutcome::Fail(failure),
            once: false,
        }
    }

    pub fn once(mut self) -> Self {
        self.once = true;
        self
    }

    pub fn matches(&self, prompt: &str) -> bool {
        self.matcher.is_match(prompt)
    }

    fn from_raw(raw: RawRule) -> Result<Self, String> {
        let matcher = match raw.mode {
            MatchMode::Substring => Matcher::Substring(raw.pattern),
            MatchMode::Regex => {
                Matcher::Regex(Regex::new(&raw.pattern).map_err(|e| e.to_string())?)
            }
        };
        let outcome = match (raw.reply, raw.fail) {
            (Some(reply), None) if !reply.trim().is_empty() => ScriptOutcome::Reply(reply),
            (Some(_), None) => return Err("`reply` is empty".into()),
            (None, Some(fail)) => ScriptOutcome::Fail(fail),
            _ => return Err("exactly one of `reply` or `fail` is required".into()),
        };
        Ok(Self {
            matcher,
            outcome,
            once: raw.once,
        })
    }
}

#[derive(Debug)]
pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
    spent: Mutex<HashSet<usize>>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        Self {
            rules,
            spent: Mutex::new(HashSet::new()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let raw: RawRule =
                serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            rules.push(ScriptRule::from_raw(raw).map_err(|e| format!("line {}: {e}", i + 1))?);
        }
        Ok(Self::new(rules))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|reason| ConfigError::Parse {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// Number of `complete` calls so far, successful or not.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn rules(&self) -> &[ScriptRule] {
        &self.rules
    }

    /// First live rule matching `prompt`; spends it if it is a `once` rule.
    fn select(&self, prompt: &str) -> Option<usize> {
        let mut spent = self.spent.lock().unwrap_or_else(|e| e.into_inner());
        let hit = self
            .rules
            .iter()
            .enumerate()
            .find(|(i, rule)| !spent.contains(i) && rule.matches(prompt))
            .map(|(i, _)| i)?;
        if self.rules[hit].once {
            spent.insert(hit);
        }
        Some(hit)
    }
}

#[async_trait]
impl LlmBackend for ScriptedBackend {
    async fn complete(&self, prompt: &str) -> Result<Completion, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if prompt.is_empty() {
            return Err(LlmError::Protocol("empty prompt".into()));
        }
        let Some(index) = self.select(prompt) else {
            return Ok(Completion {
                text: UNMATCHED_REPLY.to_string(),
                rule: None,
            });
        };
        match &self.rules[index].outcome {
            ScriptOutcome::Reply(text) => Ok(Completion {
                text: text.clone(),
                rule: Some(index),
            }),
            ScriptOutcome::Fail(ScriptFailure::Unavailable) => Err(LlmError::Unavailable(format!(
                "script rule {} simulates an outage",
                index + 1
            ))),
            ScriptOutcome::Fail(ScriptFailure::Protocol) => Err(LlmError::Protocol(format!(
                "script rule {} simulates a malformed response",
                index + 1
            ))),
        }
    }

    fn describe(&self) -> String {
        format!("scripted ({} rules)", self.rules.len())
    }
}
