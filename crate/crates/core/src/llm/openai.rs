//! Blocking client for OpenAI-compatible chat-completions endpoints.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    estimate_request_tokens, validate_messages, BackendConfig, BackendError, ChatMessage, CompletionResult,
    LlmBackend, Reply, Role, ToolCallRequest, ToolSpec, Usage,
};

const BACKOFF_BASE: Duration = Duration::from_millis(500);

pub struct OpenAiBackend {
    agent: ureq::Agent,
    api_key: String,
}

impl std::fmt::Debug for OpenAiBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiBackend").finish_non_exhaustive()
    }
}

impl OpenAiBackend {
    /// Reads the API key from the environment variable named in `config`.
    /// Fails with [`BackendError::Auth`] when it is unset or blank.
    pub fn from_env(config: &BackendConfig) -> Result<Self, BackendError> {
        let key = std::env::var(&config.api_key_env).unwrap_or_default();
        Self::with_api_key(key).map_err(|_| {
            BackendError::Auth(format!("environment variable {} is empty or unset", config.api_key_env))
        })
    }

    pub fn with_api_key(api_key: impl Into<String>) -> Result<Self, BackendError> {
        let api_key = api_key.into();
        if api_key.trim().is_empty() {
            return Err(BackendError::Auth("empty API key".into()));
        }
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(Self { agent, api_key })
    }

    fn endpoint(config: &BackendConfig) -> String {
        format!("{}/chat/completions", config.base_url.trim_end_matches('/'))
    }

    fn send(
        &self,
        body: &Value,
        config: &BackendConfig,
        stream: bool,
        on_chunk: &mut dyn FnMut(&str),
    ) -> Result<CompletionResult, BackendError> {
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            let remaining = config.request_timeout.saturating_sub(started.elapsed());
            if remaining.is_zero() {
                return Err(BackendError::Transport("request timed out".into()));
            }
            match self.send_once(body, config, remaining, stream, &mut *on_chunk) {
                Err(BackendError::RateLimited { retry_after }) if attempt < config.max_retries => {
                    let backoff = BACKOFF_BASE * 2u32.saturating_pow(attempt);
                    let wait = retry_after.map_or(backoff, |r| r.max(backoff));
                    if started.elapsed() + wait >= config.request_timeout {
                        return Err(BackendError::RateLimited { retry_after });
                    }
                    tracing::warn!(attempt, wait_ms = wait.as_millis() as u64, "rate limited, backing off");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn send_once(
        &self,
        body: &Value,
        config: &BackendConfig,
        timeout: Duration,
        stream: bool,
        on_chunk: &mut dyn FnMut(&str),
    ) -> Result<CompletionResult, BackendError> {
        let response = self
            .agent
            .post(&Self::endpoint(config))
            .config()
            .timeout_global(Some(timeout))
            .build()
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body.to_string())
            .map_err(|e| BackendError::Transport(e.to_string()))?;

        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .and_then(|s| Duration::try_from_secs_f64(s).ok());
        let mut body = response.into_body();

        if !(200..300).contains(&status) {
            let text = body.read_to_string().unwrap_or_default();
            let message = error_message(&text);
            return Err(match status {
                401 | 403 => BackendError::Auth(message),
                429 => BackendError::RateLimited { retry_after },
                400..=499 => BackendError::InvalidRequest(format!("{status}: {message}")),
                _ => BackendError::Transport(format!("server error {status}: {message}")),
            });
        }

        if stream {
            parse_stream(BufReader::new(body.into_reader()), on_chunk)
        } else {
            let text = body
                .read_to_string()
                .map_err(|e| BackendError::Transport(e.to_string()))?;
            parse_completion(&text)
        }
    }
}

impl LlmBackend for OpenAiBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        config: &BackendConfig,
    ) -> Result<CompletionResult, BackendError> {
        preflight(messages, tools, config)?;
        let body = request_body(messages, tools, config, false);
        self.send(&body, config, false, &mut |_| {})
    }

    fn complete_streaming(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        config: &BackendConfig,
        on_chunk: &mut dyn FnMut(&str),
    ) -> Result<CompletionResult, BackendError> {
        preflight(messages, tools, config)?;
        let body = request_body(messages, tools, config, config.stream);
        let result = self.send(&body, config, config.stream, &mut *on_chunk)?;
        if !config.stream {
            if let Reply::AssistantText(text) = &result.reply {
                on_chunk(text);
            }
        }
        Ok(result)
    }

    fn name(&self) -> &str {
        "openai"
    }
}

fn preflight(messages: &[ChatMessage], tools: &[ToolSpec], config: &BackendConfig) -> Result<(), BackendError> {
    validate_messages(messages)?;
    config.validate()?;
    let estimated = estimate_request_tokens(messages, tools) + config.max_output_tokens as usize;
    if estimated > config.context_window_tokens {
        return Err(BackendError::ContextOverflow {
            estimated,
            limit: config.context_window_tokens,
        });
    }
    Ok(())
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| v.pointer("/error/message").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_else(|| body.chars().take(200).collect())
}

/// The JSON body sent to `/chat/completions`.
pub fn request_body(messages: &[ChatMessage], tools: &[ToolSpec], config: &BackendConfig, stream: bool) -> Value {
    let mut body = json!({
        "model": config.model_name,
        "messages": messages.iter().map(wire_message).collect::<Vec<_>>(),
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
    });
    if let Some(seed) = config.seed {
        body["seed"] = json!(seed);
    }
    if !tools.is_empty() {
        body["tools"] = tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": {"name": t.name, "description": t.description, "parameters": t.parameters}
                })
            })
            .collect();
    }
    if stream {
        body["stream"] = json!(true);
        body["stream_options"] = json!({"include_usage": true});
    }
    body
}

fn wire_message(message: &ChatMessage) -> Value {
    let role = match message.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut wire = json!({"role": role, "content": message.content});
    if !message.tool_calls.is_empty() {
        if message.content.is_empty() {
            wire["content"] = Value::Null;
        }
        wire["tool_calls"] = message
            .tool_calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "type": "function",
                    "function": {"name": c.tool_name, "arguments": c.arguments.to_string()}
                })
            })
            .collect();
    }
    if let Some(id) = &message.tool_call_id {
        wire["tool_call_id"] = json!(id);
    }
    wire
}

#[derive(Deserialize)]
struct WireCompletion {
    #[serde(default)]
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
    #[serde(default)]
    tool_calls: Vec<WireToolCall>,
}

#[derive(Deserialize)]
struct WireToolCall {
    id: String,
    function: WireFunction,
}

#[derive(Deserialize)]
struct WireFunction {
    name: String,
    #[serde(default)]
    arguments: String,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// Tool arguments arrive as a JSON string; unparseable arguments are kept
/// as a JSON string so the caller can report them back to the model.
fn parse_arguments(raw: &str) -> Value {
    if raw.trim().is_empty() {
        return json!({});
    }
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn finish(text: String, calls: Vec<ToolCallRequest>, usage: Usage) -> Result<CompletionResult, BackendError> {
    let reply = if !calls.is_empty() {
        Reply::ToolCalls(calls)
    } else {
        Reply::AssistantText(text)
    };
    Ok(CompletionResult { reply, usage })
}

pub(crate) fn parse_completion(body: &str) -> Result<CompletionResult, BackendError> {
    let wire: WireCompletion =
        serde_json::from_str(body).map_err(|e| BackendError::MalformedReply(e.to_string()))?;
    let choice = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::MalformedReply("no choices".into()))?;
    let usage = wire.usage.unwrap_or_default();
    let calls = choice
        .message
        .tool_calls
        .into_iter()
        .map(|c| ToolCallRequest {
            id: c.id,
            tool_name: c.function.name,
            arguments: parse_arguments(&c.function.arguments),
        })
        .collect();
    finish(
        choice.message.content.unwrap_or_default(),
        calls,
        Usage {
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
        },
    )
}

#[derive(Default)]
struct PartialCall {
    id: String,
    name: String,
    arguments: String,
}

pub(crate) fn parse_stream(reader: impl BufRead, on_chunk: &mut dyn FnMut(&str)) -> Result<CompletionResult, BackendError> {
    let mut text = String::new();
    let mut calls: BTreeMap<u64, PartialCall> = BTreeMap::new();
    let mut usage = Usage::default();
    let mut done = false;
    for line in reader.lines() {
        let line = line.map_err(|e| BackendError::Transport(e.to_string()))?;
        let Some(data) = line.strip_prefix("data:") else {
            continue;
        };
        let data = data.trim();
        if data == "[DONE]" {
            done = true;
            break;
        }
        let chunk: Value = serde_json::from_str(data).map_err(|e| BackendError::MalformedReply(e.to_string()))?;
        if let Some(u) = chunk.get("usage").filter(|u| !u.is_null()) {
            usage.prompt_tokens = u["prompt_tokens"].as_u64().unwrap_or(0);
            usage.completion_tokens = u["completion_tokens"].as_u64().unwrap_or(0);
        }
        let Some(delta) = chunk.pointer("/choices/0/delta") else {
            continue;
        };
        if let Some(content) = delta.get("content").and_then(Value::as_str) {
            if !content.is_empty() {
                text.push_str(content);
                on_chunk(content);
            }
        }
        for call in delta.get("tool_calls").and_then(Value::as_array).into_iter().flatten() {
            let index = call.get("index").and_then(Value::as_u64).unwrap_or(0);
            let slot = calls.entry(index).or_default();
            if let Some(id) = call.get("id").and_then(Value::as_str) {
                slot.id.push_str(id);
            }
            if let Some(name) = call.pointer("/function/name").and_then(Value::as_str) {
                slot.name.push_str(name);
            }
            if let Some(args) = call.pointer("/function/arguments").and_then(Value::as_str) {
                slot.arguments.push_str(args);
            }
        }
    }
    if !done {
        return Err(BackendError::MalformedReply("stream ended without [DONE]".into()));
    }
    let calls = calls
        .into_values()
        .map(|c| ToolCallRequest {
            id: c.id,
            tool_name: c.name,
            arguments: parse_arguments(&c.arguments),
        })
        .collect();
    finish(text, calls, usage)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_key_is_auth_error() {
        let config = BackendConfig {
            api_key_env: "FHIRLIT_TEST_KEY_THAT_IS_NOT_SET".into(),
            ..BackendConfig::default()
        };
        assert!(matches!(OpenAiBackend::from_env(&config), Err(BackendError::Auth(_))));
        assert!(matches!(OpenAiBackend::with_api_key("  "), Err(BackendError::Auth(_))));
    }

    #[test]
    fn body_carries_sampling_fields() {
        let config = BackendConfig { seed: Some(42), temperature: 0.0, ..Default::default() };
        let messages = vec![
            ChatMessage::system("s"),
            ChatMessage::assistant_tool_calls(vec![ToolCallRequest {
                id: "c1".into(),
                tool_name: "get_resources".into(),
                arguments: json!({"names": ["x"]}),
            }]),
            ChatMessage::tool("c1", "result"),
        ];
        let body = request_body(&messages, &[], &config, false);
        assert_eq!(body["seed"], 42);
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["model"], "gpt-4-1106-preview");
        assert!(body.get("tools").is_none());
        assert_eq!(body["messages"][1]["content"], Value::Null);
        assert_eq!(body["messages"][1]["tool_calls"][0]["function"]["arguments"], r#"{"names":["x"]}"#);
        assert_eq!(body["messages"][2]["tool_call_id"], "c1");
    }

    #[test]
    fn parses_text_and_tool_calls() {
        let text = parse_completion(
            r#"{"choices":[{"message":{"role":"assistant","content":"Hi"}}],"usage":{"prompt_tokens":5,"completion_tokens":1}}"#,
        )
        .unwrap();
        assert_eq!(text.reply, Reply::AssistantText("Hi".into()));
        assert_eq!(text.usage.prompt_tokens, 5);

        let calls = parse_completion(
            r#"{"choices":[{"message":{"content":null,"tool_calls":[
                {"id":"a","type":"function","function":{"name":"get_resources","arguments":"{\"names\":[\"X\"]}"}},
                {"id":"b","type":"function","function":{"name":"get_resources","arguments":"{broken"}}]}}]}"#,
        )
        .unwrap();
        let calls = calls.tool_calls();
        assert_eq!(calls[0].arguments, json!({"names": ["X"]}));
        assert_eq!(calls[1].arguments, json!("{broken"));
    }

    #[test]
    fn malformed_bodies() {
        assert!(matches!(parse_completion("<html>"), Err(BackendError::MalformedReply(_))));
        assert!(matches!(parse_completion(r#"{"choices":[]}"#), Err(BackendError::MalformedReply(_))));
    }

    #[test]
    fn parses_stream_deltas() {
        let stream = concat!(
            "data: {\"choices\":[{\"delta\":{\"role\":\"assistant\",\"content\":\"\"}}]}\n\n",
            "data: {\"choices\":[{\"delta\":{\"content\":\"Hel\"}}]}\n\n",
            ": keep-alive\n\n",
            "data: {\"choices\":[{\"delta\":{\"content\":\"lo\"}}]}\n\n",
            "data: {\"choices\":[],\"usage\":{\"prompt_tokens\":3,\"completion_tokens\":2}}\n\n",
            "data: [DONE]\n\n",
        );
        let mut chunks = Vec::new();
        let result = parse_stream(stream.as_bytes(), &mut |c| chunks.push(c.to_string())).unwrap();
        assert_eq!(chunks, ["Hel", "lo"]);
        assert_eq!(result.text(), Some("Hello"));
        assert_eq!(result.usage.completion_tokens, 2);
    }

    #[test]
    fn parses_streamed_tool_calls() {
        let stream = concat!(
            "data: {\"choices\":[{\"delta\":{\"tool_calls\":[{\"index\":0,\"id\":\"c1\",\"function\":{\"name\":\"get_resources\",\"arguments\":\"{\\\"na\"}}]}}]}\n",
            "data: {\"choices\":[{\"delta\":{\"tool_calls\":[{\"index\":0,\"function\":{\"arguments\":\"mes\\\":[]}\"}}]}}]}\n",
            "data: [DONE]\n",
        );
        let result = parse_stream(stream.as_bytes(), &mut |_| {}).unwrap();
        assert_eq!(result.tool_calls()[0].arguments, json!({"names": []}));
        assert_eq!(result.tool_calls()[0].id, "c1");
    }

    #[test]
    fn truncated_stream_is_malformed() {
        let stream = "data: {\"choices\":[{\"delta\":{\"content\":\"Hel\"}}]}\n";
        assert!(matches!(parse_stream(stream.as_bytes(), &mut |_| {}), Err(BackendError::MalformedReply(_))));
    }

    #[test]
    fn preflight_guards_context_window() {
        let config = BackendConfig { context_window_tokens: 100, max_output_tokens: 50, ..Default::default() };
        let messages = vec![ChatMessage::system("x".repeat(400))];
        assert!(matches!(
            preflight(&messages, &[], &config),
            Err(BackendError::ContextOverflow { .. })
        ));
    }
}
