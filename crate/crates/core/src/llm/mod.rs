//! Dialogue-generation backends.
//!
//! Both backends take the fully rendered prompt; no conversation state lives
//! on the backend side. Calls are made at most once: errors are returned to
//! the caller, never retried here.

mod remote;
mod scripted;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;

use crate::error::{ConfigError, LlmError};

pub use remote::RemoteHttpBackend;
pub use scripted::{
    MatchMode, ScriptFailure, ScriptOutcome, ScriptRule, ScriptedBackend, UNMATCHED_REPLY,
};

pub const DEFAULT_TIMEOUT_SECS: u64 = 30;
pub const DEFAULT_API_KEY_ENV: &str = "NPCBRIDGE_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Index of the script rule that produced the reply. Always `Some` for
    /// remote replies; `None` means the scripted fallback fired.
    pub rule: Option<usize>,
}

impl Completion {
    pub fn unmatched(&self) -> bool {
        self.rule.is_none()
    }
}

#[async_trait]
pub trait LlmBackend: Send + Sync {
    async fn complete(&self, prompt: &str) -> Result<Completion, LlmError>;

    /// Short human-readable label for logs.
    fn describe(&self) -> String;
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LlmBackendConfig {
    Scripted {
        script_path: PathBuf,
    },
    RemoteHttp {
        /// Full URL of the chat-completions endpoint.
        endpoint: String,
        model_name: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        /// Environment variable holding the API key. Unset or empty means no
        /// `Authorization` header is sent.
        #[serde(default = "default_api_key_env")]
        api_key_env: String,
    },
}

fn default_timeout_secs() -> u64 {
    DEFAULT_TIMEOUT_SECS
}

fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}

impl LlmBackendConfig {
    pub fn timeout(&self) -> Option<Duration> {
        match self {
            LlmBackendConfig::Scripted { .. } => None,
            LlmBackendConfig::RemoteHttp { timeout_secs, .. } => {
                Some(Duration::from_secs(*timeout_secs))
            }
        }
    }

    pub fn build(&self) -> Result<Arc<dyn LlmBackend>, ConfigError> {
        match self {
            LlmBackendConfig::Scripted { script_path } => {
                Ok(Arc::new(ScriptedBackend::from_path(script_path)?))
            }
            LlmBackendConfig::RemoteHttp {
                endpoint,
                model_name,
                timeout_secs,
                api_key_env,
            } => {
                let api_key = std::env::var(api_key_env).ok().filter(|k| !k.is_empty());
                Ok(Arc::new(RemoteHttpBackend::new(
                    endpoint,
                    model_name,
                    Duration::from_secs(*timeout_secs),
                    api_key,
                )?))
            }
        }
    }
}
