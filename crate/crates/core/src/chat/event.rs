use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    UserMessage,
    ToolCall,
    ToolResult,
    AssistantChunk,
    AssistantDone,
    Cleared,
    Error,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::UserMessage => "user_message",
            EventKind::ToolCall => "tool_call",
            EventKind::ToolResult => "tool_result",
            EventKind::AssistantChunk => "assistant_chunk",
            EventKind::AssistantDone => "assistant_done",
            EventKind::Cleared => "cleared",
            EventKind::Error => "error",
        }
    }

    /// Whether the event ends a message exchange.
    pub fn is_terminal(self) -> bool {
        matches!(self, EventKind::AssistantDone | EventKind::Error)
    }
}

/// One entry of a session's append-only event log.
///
/// Payloads by kind: `user_message`, `assistant_chunk` and `assistant_done`
/// carry text; `tool_call` and `tool_result` carry a JSON object as a
/// string; `error` carries `{"code", "message"}` JSON; `cleared` is empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub payload: String,
    pub timestamp: DateTime<Utc>,
}

pub fn write_transcript(events: &[SessionEvent], mut out: impl Write) -> std::io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_transcript(path: &Path) -> std::io::Result<Vec<SessionEvent>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut events = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}:{}: {e}", path.display(), n + 1),
            )
        })?;
        events.push(event);
    }
    Ok(events)
}
