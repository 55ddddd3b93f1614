//! Per-resource summaries and interpretations.
//!
//! Summaries feed the chat loop's tool results and are capped at
//! [`MAX_SUMMARY_WORDS`] whitespace-separated words. When a reply runs long
//! the backend is asked once to compress it; if it is still too long the
//! text is cut at the cap and the last kept word gets a trailing `…`.

mod cache;

use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use cache::{CacheKey, SummaryCache};

use crate::clock::{Clock, SystemClock};
use crate::fhir::ResourceEnvelope;
use crate::llm::{BackendConfig, BackendError, ChatMessage, LlmBackend, Reply};
use crate::locale::response_instruction;
use crate::pipeline::{compute_identifier, CatalogEntry, ResourceIdentifier};

pub const MAX_SUMMARY_WORDS: usize = 100;

const ELLIPSIS: char = '…';

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceSummary {
    pub identifier: ResourceIdentifier,
    pub summary_text: String,
    pub locale: String,
    pub created_at: DateTime<Utc>,
    pub word_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceInterpretation {
    pub identifier: ResourceIdentifier,
    pub interpretation_text: String,
    pub locale: String,
}

#[derive(Debug, thiserror::Error)]
pub enum SummarizeError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("summary cache write failed: {0}")]
    Cache(#[from] std::io::Error),
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Keeps the first `max` words, joined by single spaces, and marks the cut
/// with an ellipsis on the last kept word. Text within the cap is returned
/// unchanged.
pub fn truncate_words(text: &str, max: usize) -> String {
    if word_count(text) <= max {
        return text.to_string();
    }
    let mut out = text.split_whitespace().take(max).collect::<Vec<_>>().join(" ");
    out.push(ELLIPSIS);
    out
}

const SUMMARY_INSTRUCTIONS: &str = "You summarize one FHIR health record resource for the patient it belongs to. \
Use plain, friendly language and avoid jargon. Write fewer than 100 words. \
Do not give medical advice beyond what the record states.";

const INTERPRETATION_INSTRUCTIONS: &str = "You explain one FHIR health record resource to the patient it belongs to. \
Describe what the record means, why it may matter and what questions the patient could ask their care team. \
Use plain, friendly language.";

const COMPRESS_REQUEST: &str = "That summary is too long. Rewrite it in fewer than 100 words.";

/// Builds the two-message prompt for a resource: instructions plus the
/// locale line, then the identifier and the resource's raw JSON.
pub fn resource_prompt(instructions: &str, label: &str, envelope: &ResourceEnvelope, locale: &str) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(format!("{instructions}\n{}", response_instruction(locale))),
        ChatMessage::user(format!("Resource: {label}\n{}", envelope.raw_compact())),
    ]
}

fn reply_text(reply: Reply) -> Result<String, BackendError> {
    match reply {
        Reply::AssistantText(text) if !text.trim().is_empty() => Ok(text.trim().to_string()),
        Reply::AssistantText(_) => Err(BackendError::MalformedReply("empty reply".into())),
        Reply::ToolCalls(_) => Err(BackendError::MalformedReply("tool call where text was expected".into())),
    }
}

/// Summarizes and interprets resources through one backend and cache.
pub struct Summarizer {
    backend: Arc<dyn LlmBackend>,
    config: BackendConfig,
    cache: Arc<SummaryCache>,
    clock: Arc<dyn Clock>,
}

impl Summarizer {
    pub fn new(backend: Arc<dyn LlmBackend>, config: BackendConfig, cache: Arc<SummaryCache>) -> Self {
        Self {
            backend,
            config,
            cache,
            clock: Arc::new(SystemClock::new()),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn cache(&self) -> &SummaryCache {
        &self.cache
    }

    pub fn summarize_resource(&self, envelope: &ResourceEnvelope, locale: &str) -> Result<ResourceSummary, SummarizeError> {
        let identifier = compute_identifier(envelope);
        let label = identifier.render();
        self.summarize_as(identifier, &label, envelope, locale)
    }

    /// Like [`Self::summarize_resource`] but names the resource by its
    /// catalog identifier, which may carry a `#n` suffix.
    pub fn summarize_entry(&self, entry: &CatalogEntry, locale: &str) -> Result<ResourceSummary, SummarizeError> {
        self.summarize_as(entry.identifier.clone(), &entry.rendered, &entry.envelope, locale)
    }

    fn summarize_as(
        &self,
        identifier: ResourceIdentifier,
        label: &str,
        envelope: &ResourceEnvelope,
        locale: &str,
    ) -> Result<ResourceSummary, SummarizeError> {
        let key = CacheKey {
            logical_id: envelope.logical_id.clone(),
            content_hash: envelope.content_hash(),
            locale: locale.to_string(),
        };
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }

        let mut messages = resource_prompt(SUMMARY_INSTRUCTIONS, label, envelope, locale);
        let mut text = reply_text(self.backend.complete(&messages, &[], &self.config)?.reply)?;
        if word_count(&text) > MAX_SUMMARY_WORDS {
            messages.push(ChatMessage::assistant(text.clone()));
            messages.push(ChatMessage::user(COMPRESS_REQUEST));
            if let Ok(compressed) = self
                .backend
                .complete(&messages, &[], &self.config)
                .and_then(|r| reply_text(r.reply))
            {
                text = compressed;
            }
            text = truncate_words(&text, MAX_SUMMARY_WORDS);
        }

        let summary = ResourceSummary {
            identifier,
            word_count: word_count(&text),
            summary_text: text,
            locale: locale.to_string(),
            created_at: self.clock.now(),
        };
        self.cache.insert(key, summary.clone())?;
        Ok(summary)
    }

    pub fn interpret_resource(&self, envelope: &ResourceEnvelope, locale: &str) -> Result<ResourceInterpretation, SummarizeError> {
        let identifier = compute_identifier(envelope);
        let messages = resource_prompt(INTERPRETATION_INSTRUCTIONS, &identifier.render(), envelope, locale);
        let text = reply_text(self.backend.complete(&messages, &[], &self.config)?.reply)?;
        Ok(ResourceInterpretation {
            identifier,
            interpretation_text: text,
            locale: locale.to_string(),
        })
    }
}
