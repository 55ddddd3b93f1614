//! Chat-completion backends.
//!
//! [`LlmBackend`] is the one seam between the chat loop and a model. Two
//! implementations ship: [`MockBackend`], a scripted and fully deterministic
//! test double, and [`OpenAiBackend`], a blocking client for any
//! OpenAI-compatible `/chat/completions` endpoint.

mod budget;
mod config;
mod message;
mod mock;
mod openai;

use std::time::Duration;

pub use budget::{estimate_request_tokens, estimate_tokens};
pub use config::BackendConfig;
pub use message::{ChatMessage, CompletionResult, Reply, Role, ToolCallRequest, ToolSpec, Usage};
pub use mock::{chunk_text, mock_script, MockBackend, ScriptStep};
pub use openai::{request_body, OpenAiBackend};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited (retry after {retry_after:?})")]
    RateLimited { retry_after: Option<Duration> },
    #[error("malformed reply: {0}")]
    MalformedReply(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("request needs ~{estimated} tokens but the context window is {limit}")]
    ContextOverflow { estimated: usize, limit: usize },
    #[error("mock script ended on a tool call")]
    ScriptExhaustedWithoutText,
}

/// A chat-completions model that can answer with text or tool calls.
///
/// Implementations must not mutate their inputs and must be safe to share
/// between sessions; each call is independent.
pub trait LlmBackend: Send + Sync {
    fn complete(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        config: &BackendConfig,
    ) -> Result<CompletionResult, BackendError>;

    /// Like [`complete`](Self::complete) but reports assistant text
    /// progressively. The concatenation of all chunks equals the final text.
    fn complete_streaming(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        config: &BackendConfig,
        on_chunk: &mut dyn FnMut(&str),
    ) -> Result<CompletionResult, BackendError> {
        let result = self.complete(messages, tools, config)?;
        if let Reply::AssistantText(text) = &result.reply {
            on_chunk(text);
        }
        Ok(result)
    }

    fn name(&self) -> &str;
}

pub(crate) fn validate_messages(messages: &[ChatMessage]) -> Result<(), BackendError> {
    match messages.first() {
        None => Err(BackendError::InvalidRequest("no messages".into())),
        Some(first) if first.role != Role::System => Err(BackendError::InvalidRequest(
            "first message must have the system role".into(),
        )),
        _ => Ok(()),
    }
}
