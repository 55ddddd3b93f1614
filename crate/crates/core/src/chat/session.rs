use std::sync::{Arc, Mutex, TryLockError};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::event::{EventKind, SessionEvent};
use super::tool::{dispatch, get_resources_spec};
use crate::clock::{Clock, SystemClock};
use crate::fhir::{Bundle, FhirError};
use crate::llm::{BackendConfig, BackendError, ChatMessage, LlmBackend, Reply, Role, ToolSpec};
use crate::locale::{is_valid_locale, response_instruction};
use crate::pipeline::{build_catalog, Catalog, FilterConfig};
use crate::summarizer::Summarizer;

pub const DEFAULT_SYSTEM_PROMPT: &str = include_str!("../../assets/system_prompt.txt");

pub const FALLBACK_REPLY: &str = "I'm sorry, I could not finish looking up your records for this question. \
Please try asking again, perhaps about one topic at a time.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub locale: String,
    pub max_tool_iterations: usize,
    /// Supports `{locale}` and `{response_instruction}` placeholders.
    pub system_prompt_template: String,
    pub backend: BackendConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            locale: "en".into(),
            max_tool_iterations: 10,
            system_prompt_template: DEFAULT_SYSTEM_PROMPT.into(),
            backend: BackendConfig::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ChatError> {
        if self.max_tool_iterations == 0 {
            return Err(ChatError::InvalidConfig("max_tool_iterations must be at least 1".into()));
        }
        if !is_valid_locale(&self.locale) {
            return Err(ChatError::InvalidConfig(format!("invalid locale tag {:?}", self.locale)));
        }
        self.backend.validate().map_err(|e| ChatError::InvalidConfig(e.to_string()))
    }

    pub fn render_system_prompt(&self) -> String {
        self.system_prompt_template
            .replace("{locale}", &self.locale)
            .replace("{response_instruction}", &response_instruction(&self.locale))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ChatError {
    #[error("message text is empty")]
    EmptyMessage,
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Fhir(#[from] FhirError),
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
    #[error("tool loop exceeded {iterations} iterations")]
    ToolLoopExceeded { iterations: usize, fallback: String },
    #[error("session is busy with another message")]
    SessionBusy,
}

impl ChatError {
    pub fn code(&self) -> &'static str {
        match self {
            ChatError::EmptyMessage => "empty_message",
            ChatError::InvalidConfig(_) => "invalid_config",
            ChatError::Fhir(_) => "invalid_bundle",
            ChatError::Backend(_) => "backend_error",
            ChatError::ToolLoopExceeded { .. } => "tool_loop_exceeded",
            ChatError::SessionBusy => "session_busy",
        }
    }
}

/// One patient conversation over a fixed catalog.
pub struct ChatSession {
    session_id: String,
    messages: Vec<ChatMessage>,
    prefix: [ChatMessage; 2],
    catalog: Arc<Catalog>,
    config: SessionConfig,
    tools: Vec<ToolSpec>,
    event_log: Vec<SessionEvent>,
    backend: Arc<dyn LlmBackend>,
    summarizer: Arc<Summarizer>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for ChatSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatSession")
            .field("session_id", &self.session_id)
            .field("messages", &self.messages.len())
            .field("events", &self.event_log.len())
            .finish_non_exhaustive()
    }
}

/// Builds the catalog for `bundle` and opens a session over it.
pub fn new_session(
    session_id: impl Into<String>,
    bundle: &Bundle,
    config: SessionConfig,
    filter: &FilterConfig,
    reference_date: NaiveDate,
    backend: Arc<dyn LlmBackend>,
    summarizer: Arc<Summarizer>,
) -> Result<ChatSession, ChatError> {
    let catalog = Arc::new(build_catalog(bundle, filter, reference_date)?);
    ChatSession::new(session_id, catalog, config, backend, summarizer)
}

impl ChatSession {
    pub fn new(
        session_id: impl Into<String>,
        catalog: Arc<Catalog>,
        config: SessionConfig,
        backend: Arc<dyn LlmBackend>,
        summarizer: Arc<Summarizer>,
    ) -> Result<Self, ChatError> {
        config.validate()?;
        let patient = json!({
            "patient": catalog.patient,
            "patient_resource": catalog.patient_resource.raw_value(),
        });
        let prefix = [
            ChatMessage::system(config.render_system_prompt()),
            ChatMessage::system(format!("Patient record:\n{patient}")),
        ];
        Ok(Self {
            session_id: session_id.into(),
            messages: prefix.to_vec(),
            prefix,
            tools: vec![get_resources_spec(&catalog)],
            catalog,
            config,
            event_log: Vec::new(),
            backend,
            summarizer,
            clock: Arc::new(SystemClock::new()),
        })
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    /// The system and patient messages every conversation starts from.
    pub fn prefix(&self) -> &[ChatMessage] {
        &self.prefix
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn tools(&self) -> &[ToolSpec] {
        &self.tools
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.event_log
    }

    fn emit(&mut self, kind: EventKind, payload: String, sink: &mut dyn FnMut(&SessionEvent)) {
        let event = SessionEvent {
            seq: self.event_log.len() as u64,
            kind,
            payload,
            timestamp: self.clock.now(),
        };
        sink(&event);
        self.event_log.push(event);
    }

    /// Sends one user message and runs the tool loop until the model answers.
    ///
    /// At most `max_tool_iterations` rounds of tool calls are served, so the
    /// backend is called at most `max_tool_iterations + 1` times. If the
    /// model still wants tools after that, the fallback reply is appended
    /// and [`ChatError::ToolLoopExceeded`] returned. A backend failure rolls
    /// the messages back to their state before the call. Either way the
    /// last emitted event is an `error`; successful turns end with
    /// `assistant_done`.
    pub fn ask(&mut self, user_text: &str, sink: &mut dyn FnMut(&SessionEvent)) -> Result<String, ChatError> {
        if user_text.trim().is_empty() {
            return Err(ChatError::EmptyMessage);
        }
        let checkpoint = self.messages.len();
        self.messages.push(ChatMessage::user(user_text));
        self.emit(EventKind::UserMessage, user_text.to_string(), sink);

        let mut rounds = 0;
        loop {
            let mut chunks = Vec::new();
            let result = self.backend.complete_streaming(
                &self.messages,
                &self.tools,
                &self.config.backend,
                &mut |chunk| chunks.push(chunk.to_string()),
            );
            let result = match result {
                Ok(result) => result,
                Err(e) => {
                    self.messages.truncate(checkpoint);
                    let payload = json!({"code": "backend_error", "message": e.to_string()}).to_string();
                    self.emit(EventKind::Error, payload, sink);
                    return Err(e.into());
                }
            };
            match result.reply {
                Reply::AssistantText(text) => {
                    for chunk in chunks {
                        self.emit(EventKind::AssistantChunk, chunk, sink);
                    }
                    self.messages.push(ChatMessage::assistant(text.clone()));
                    self.emit(EventKind::AssistantDone, text.clone(), sink);
                    return Ok(text);
                }
                Reply::ToolCalls(_) if rounds == self.config.max_tool_iterations => {
                    self.messages.push(ChatMessage::assistant(FALLBACK_REPLY));
                    let payload = json!({
                        "code": "tool_loop_exceeded",
                        "message": format!("stopped after {rounds} tool rounds"),
                        "reply": FALLBACK_REPLY,
                    })
                    .to_string();
                    self.emit(EventKind::Error, payload, sink);
                    return Err(ChatError::ToolLoopExceeded {
                        iterations: rounds,
                        fallback: FALLBACK_REPLY.to_string(),
                    });
                }
                Reply::ToolCalls(calls) => {
                    rounds += 1;
                    self.messages.push(ChatMessage::assistant_tool_calls(calls.clone()));
                    for call in &calls {
                        let payload = json!({"id": call.id, "tool": call.tool_name, "arguments": call.arguments});
                        self.emit(EventKind::ToolCall, payload.to_string(), sink);
                        let content = dispatch(call, &self.catalog, &self.summarizer, &self.config.locale);
                        let payload = json!({"tool_call_id": call.id, "content": content});
                        self.emit(EventKind::ToolResult, payload.to_string(), sink);
                        self.messages.push(ChatMessage::tool(call.id.clone(), content));
                    }
                }
            }
        }
    }

    /// Drops the conversation back to the system and patient messages.
    pub fn clear(&mut self, sink: &mut dyn FnMut(&SessionEvent)) {
        self.messages = self.prefix.to_vec();
        self.emit(EventKind::Cleared, String::new(), sink);
    }

    /// Every tool message answers exactly one earlier assistant tool call.
    pub fn tool_calls_closed(&self) -> bool {
        let mut open = std::collections::HashMap::<&str, usize>::new();
        for m in &self.messages {
            for call in &m.tool_calls {
                *open.entry(call.id.as_str()).or_default() += 1;
            }
            if m.role == Role::Tool {
                match m.tool_call_id.as_deref().and_then(|id| open.get(id)) {
                    Some(1) => {}
                    _ => return false,
                }
            }
        }
        true
    }
}

/// A session that rejects overlapping use instead of queueing.
pub struct SharedSession {
    inner: Mutex<ChatSession>,
}

impl SharedSession {
    pub fn new(session: ChatSession) -> Self {
        Self {
            inner: Mutex::new(session),
        }
    }

    /// Runs `f` with exclusive access, or fails with
    /// [`ChatError::SessionBusy`] if another caller holds the session.
    pub fn try_with<T>(&self, f: impl FnOnce(&mut ChatSession) -> T) -> Result<T, ChatError> {
        match self.inner.try_lock() {
            Ok(mut guard) => Ok(f(&mut guard)),
            Err(TryLockError::WouldBlock) => Err(ChatError::SessionBusy),
            Err(TryLockError::Poisoned(poisoned)) => Ok(f(&mut poisoned.into_inner())),
        }
    }

    pub fn ask(&self, user_text: &str, sink: &mut dyn FnMut(&SessionEvent)) -> Result<String, ChatError> {
        self.try_with(|s| s.ask(user_text, sink))?
    }

    pub fn clear(&self, sink: &mut dyn FnMut(&SessionEvent)) -> Result<(), ChatError> {
        self.try_with(|s| s.clear(sink))
    }
}
