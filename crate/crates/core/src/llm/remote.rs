//! Chat-completions client for any OpenAI-compatible endpoint.

use std::time::Duration;

use async_trait::async_trait;
use reqwest::Url;
use serde::{Deserialize, Serialize};

use super::{Completion, LlmBackend};
use crate::error::{ConfigError, LlmError};
use crate::prompt::split_rendered;

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    stream: bool,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

pub struct RemoteHttpBackend {
    http: reqwest::Client,
    endpoint: Url,
    model: String,
    api_key: Option<String>,
}

impl std::fmt::Debug for RemoteHttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteHttpBackend")
            .field("endpoint", &self.endpoint.as_str())
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl RemoteHttpBackend {
    pub fn new(
        endpoint: &str,
        model: &str,
        timeout: Duration,
        api_key: Option<String>,
    ) -> Result<Self, ConfigError> {
        let endpoint = Url::parse(endpoint)
            .map_err(|e| ConfigError::Invalid(format!("backend endpoint `{endpoint}`: {e}")))?;
        if model.trim().is_empty() {
            return Err(ConfigError::Invalid("backend model_name is empty".into()));
        }
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ConfigError::Invalid(format!("http client: {e}")))?;
        Ok(Self {
            http,
            endpoint,
            model: model.to_string(),
            api_key,
        })
    }
}

/// Reasoning models may prefix their answer with a `<think>` block.
fn strip_reasoning(text: &str) -> &str {
    let trimmed = text.trim_start();
    if let Some(rest) = trimmed.strip_prefix("<think>") {
        if let Some(end) = rest.find("</think>") {
            return rest[end + "</think>".len()..].trim();
        }
    }
    text.trim()
}

#[async_trait]
impl LlmBackend for RemoteHttpBackend {
    async fn complete(&self, prompt: &str) -> Result<Completion, LlmError> {
        if prompt.is_empty() {
            return Err(LlmError::Protocol("empty prompt".into()));
        }
        let (system, dialogue) = split_rendered(prompt);
        let mut messages = Vec::with_capacity(2);
        if let Some(system) = system {
            messages.push(ChatMessage {
                role: "system",
                content: system,
            });
        }
        messages.push(ChatMessage {
            role: "user",
            content: dialogue,
        });
        let body = ChatRequest {
            model: &self.model,
            messages,
            stream: false,
        };

        let mut request = self.http.post(self.endpoint.clone()).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .await
            .map_err(|e| LlmError::Unavailable(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(LlmError::Unavailable(format!("backend answered {status}")));
        }
        if !status.is_success() {
            return Err(LlmError::Protocol(format!("backend answered {status}")));
        }
        let bytes = response
            .bytes()
            .await
            .map_err(|e| LlmError::Unavailable(e.to_string()))?;
        let parsed: ChatResponse = serde_json::from_slice(&bytes)
            .map_err(|e| LlmError::Protocol(format!("unexpected response body: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Protocol("response has no first choice content".into()))?;
        let text = strip_reasoning(&content);
        if text.is_empty() {
            return Err(LlmError::Protocol("empty completion".into()));
        }
        Ok(Completion {
            text: text.to_string(),
            rule: Some(0),
        })
    }

    fn describe(&self) -> String {
        format!("remote {} ({})", self.endpoint, self.model)
    }
}
