//! Scripted backend for deterministic tests and offline runs.
//!
//! A script is a list of [`ScriptStep`]s. The step used for a call is picked
//! by the number of assistant messages already in the history, so the reply
//! is a pure function of `(script, seed, messages)`: replaying the same
//! conversation replays the same answers, and clearing a conversation starts
//! the script over.
//!
//! Templates may reference the conversation:
//!
//! | placeholder | expands to |
//! |-------------|------------|
//! | `{tool_results}` | tool message contents since the last user message, one per line |
//! | `{user}` | the last user message |
//! | `{user_line:N}` | line `N` (1-based) of the last user message |
//! | `{identifiers}` | every identifier offered in the tool schemas, `; `-separated |
//! | `{identifiers:Kind}` | the identifiers of one resource kind |
//! | `{choice:a\|b\|c}` | one alternative, picked by hashing the seed and history |
//! | `{{`, `}}` | literal braces |
//!
//! In tool-call arguments a string that consists of exactly one
//! `{identifiers...}` placeholder becomes a JSON array instead of a string.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{
    estimate_request_tokens, estimate_tokens, validate_messages, BackendConfig, BackendError, ChatMessage,
    CompletionResult, LlmBackend, Reply, Role, ToolCallRequest, ToolSpec, Usage,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptStep {
    EmitText(String),
    CallTool { tool: String, arguments: Value },
}

impl ScriptStep {
    pub fn text(template: impl Into<String>) -> Self {
        ScriptStep::EmitText(template.into())
    }

    pub fn call(tool: impl Into<String>, arguments: Value) -> Self {
        ScriptStep::CallTool {
            tool: tool.into(),
            arguments,
        }
    }
}

#[derive(Debug)]
pub struct MockBackend {
    steps: Vec<ScriptStep>,
    latency: Option<Duration>,
    calls: AtomicUsize,
    recorded: Option<Mutex<Vec<Vec<ChatMessage>>>>,
}

/// Builds a mock backend from a non-empty script.
pub fn mock_script(steps: Vec<ScriptStep>) -> Result<MockBackend, BackendError> {
    if steps.is_empty() {
        return Err(BackendError::InvalidRequest("mock script has no steps".into()));
    }
    Ok(MockBackend {
        steps,
        latency: None,
        calls: AtomicUsize::new(0),
        recorded: None,
    })
}

impl MockBackend {
    /// A backend that always answers with `text`.
    pub fn fixed(text: impl Into<String>) -> Self {
        mock_script(vec![ScriptStep::EmitText(text.into())]).expect("one step")
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }

    /// Keep a copy of every request's messages for later inspection.
    pub fn recording(mut self) -> Self {
        self.recorded = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn steps(&self) -> &[ScriptStep] {
        &self.steps
    }

    /// Number of `complete` calls served so far.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn recorded_requests(&self) -> Vec<Vec<ChatMessage>> {
        self.recorded
            .as_ref()
            .map(|r| r.lock().expect("recording lock").clone())
            .unwrap_or_default()
    }

    fn step_for(&self, messages: &[ChatMessage]) -> Result<(usize, &ScriptStep), BackendError> {
        let index = messages.iter().filter(|m| m.role == Role::Assistant).count();
        match self.steps.get(index) {
            Some(step) => Ok((index, step)),
            None => match self.steps.last() {
                Some(step @ ScriptStep::EmitText(_)) => Ok((index, step)),
                _ => Err(BackendError::ScriptExhaustedWithoutText),
            },
        }
    }
}

impl LlmBackend for MockBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        config: &BackendConfig,
    ) -> Result<CompletionResult, BackendError> {
        validate_messages(messages)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(recorded) = &self.recorded {
            recorded.lock().expect("recording lock").push(messages.to_vec());
        }
        if let Some(latency) = self.latency {
            std::thread::sleep(latency);
        }

        let context = TemplateContext::new(messages, tools, config.seed);
        let (index, step) = self.step_for(messages)?;
        let prompt_tokens = estimate_request_tokens(messages, tools) as u64;
        let result = match step {
            ScriptStep::EmitText(template) => {
                let text = context.expand(template);
                CompletionResult {
                    usage: Usage {
                        prompt_tokens,
                        completion_tokens: estimate_tokens(&text) as u64,
                    },
                    reply: Reply::AssistantText(text),
                }
            }
            ScriptStep::CallTool { tool, arguments } => {
                let arguments = context.expand_json(arguments);
                CompletionResult {
                    usage: Usage {
                        prompt_tokens,
                        completion_tokens: estimate_tokens(&arguments.to_string()) as u64,
                    },
                    reply: Reply::ToolCalls(vec![ToolCallRequest {
                        id: format!("call_{index}"),
                        tool_name: tool.clone(),
                        arguments,
                    }]),
                }
            }
        };
        Ok(result)
    }

    fn complete_streaming(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        config: &BackendConfig,
        on_chunk: &mut dyn FnMut(&str),
    ) -> Result<CompletionResult, BackendError> {
        let result = self.complete(messages, tools, config)?;
        if let Reply::AssistantText(text) = &result.reply {
            for chunk in chunk_text(text) {
                on_chunk(chunk);
            }
        }
        Ok(result)
    }

    fn name(&self) -> &str {
        "mock"
    }
}

/// Splits text into word-sized chunks, each carrying its trailing
/// whitespace. Concatenating the chunks gives back `text`.
pub fn chunk_text(text: &str) -> Vec<&str> {
    let mut chunks = Vec::new();
    let mut start = 0;
    let mut in_space = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            in_space = true;
        } else if in_space {
            chunks.push(&text[start..i]);
            start = i;
            in_space = false;
        }
    }
    if start < text.len() {
        chunks.push(&text[start..]);
    }
    chunks
}

struct TemplateContext<'a> {
    messages: &'a [ChatMessage],
    identifiers: Vec<String>,
    seed: Option<i64>,
}

impl<'a> TemplateContext<'a> {
    fn new(messages: &'a [ChatMessage], tools: &[ToolSpec], seed: Option<i64>) -> Self {
        let mut identifiers = Vec::new();
        for tool in tools {
            collect_enum_strings(&tool.parameters, &mut identifiers);
        }
        identifiers.retain(|s| s.contains(" | "));
        identifiers.dedup();
        Self {
            messages,
            identifiers,
            seed,
        }
    }

    fn last_user(&self) -> Option<(usize, &ChatMessage)> {
        self.messages
            .iter()
            .enumerate()
            .rev()
            .find(|(_, m)| m.role == Role::User)
    }

    fn identifiers_for(&self, kind: Option<&str>) -> Vec<String> {
        self.identifiers
            .iter()
            .filter(|id| kind.is_none_or(|k| id.starts_with(&format!("{k} | "))))
            .cloned()
            .collect()
    }

    fn placeholder(&self, name: &str) -> Option<String> {
        let (head, arg) = match name.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (name, None),
        };
        match (head, arg) {
            ("tool_results", None) => {
                let from = self.last_user().map_or(0, |(i, _)| i + 1);
                Some(
                    self.messages[from..]
                        .iter()
                        .filter(|m| m.role == Role::Tool)
                        .map(|m| m.content.as_str())
                        .collect::<Vec<_>>()
                        .join("\n"),
                )
            }
            ("user", None) => Some(self.last_user().map(|(_, m)| m.content.clone()).unwrap_or_default()),
            ("user_line", Some(n)) => {
                let n: usize = n.parse().ok()?;
                let user = self.last_user().map(|(_, m)| m.content.as_str()).unwrap_or("");
                Some(user.lines().nth(n.checked_sub(1)?).unwrap_or("").to_string())
            }
            ("identifiers", kind) => Some(self.identifiers_for(kind).join("; ")),
            ("choice", Some(options)) => {
                let options: Vec<&str> = options.split('|').collect();
                Some(options[self.pick(options.len())].to_string())
            }
            _ => None,
        }
    }

    fn pick(&self, n: usize) -> usize {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.unwrap_or(0).to_le_bytes());
        hasher.update(serde_json::to_vec(self.messages).unwrap_or_default());
        let digest = hasher.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(word) % n as u64) as usize
    }

    fn expand(&self, template: &str) -> String {
        let mut out = String::with_capacity(template.len());
        let mut rest = template;
        while let Some(i) = rest.find(['{', '}']) {
            out.push_str(&rest[..i]);
            let tail = &rest[i..];
            if tail.starts_with("{{") || tail.starts_with("}}") {
                out.push_str(&tail[..1]);
                rest = &tail[2..];
                continue;
            }
            if tail.starts_with('{') {
                if let Some(end) = tail.find('}') {
                    if let Some(value) = self.placeholder(&tail[1..end]) {
                        out.push_str(&value);
                        rest = &tail[end + 1..];
                        continue;
                    }
                }
            }
            out.push_str(&tail[..1]);
            rest = &tail[1..];
        }
        out.push_str(rest);
        out
    }

    fn expand_json(&self, value: &Value) -> Value {
        match value {
            Value::String(s) => {
                if let Some(inner) = s.strip_prefix('{').and_then(|s| s.strip_suffix('}')) {
                    if let Some(kind) = inner.strip_prefix("identifiers") {
                        if kind.is_empty() || kind.starts_with(':') {
                            let kind = kind.strip_prefix(':');
                            return Value::Array(self.identifiers_for(kind).into_iter().map(Value::String).collect());
                        }
                    }
                }
                Value::String(self.expand(s))
            }
            Value::Array(items) => Value::Array(items.iter().map(|v| self.expand_json(v)).collect()),
            Value::Object(map) => Value::Object(map.iter().map(|(k, v)| (k.clone(), self.expand_json(v))).collect()),
            other => other.clone(),
        }
    }
}

fn collect_enum_strings(schema: &Value, out: &mut Vec<String>) {
    match schema {
        Value::Object(map) => {
            for (key, value) in map {
                if key == "enum" {
                    if let Value::Array(items) = value {
                        out.extend(items.iter().filter_map(Value::as_str).map(str::to_string));
                    }
                } else {
                    collect_enum_strings(value, out);
                }
            }
        }
        Value::Array(items) => items.iter().for_each(|v| collect_enum_strings(v, out)),
        _ => {}
    }
}
