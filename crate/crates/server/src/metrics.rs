use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use fhirlit_core::llm::{BackendConfig, BackendError, ChatMessage, CompletionResult, LlmBackend, ToolSpec};
use serde::Serialize;

#[derive(Debug, Default)]
pub struct Metrics {
    pub chat_backend_calls: AtomicU64,
    pub summary_backend_calls: AtomicU64,
    pub summary_requests: AtomicU64,
    pub summary_cache_hits: AtomicU64,
    pub summary_latency_micros_total: AtomicU64,
    pub messages: AtomicU64,
}

/// Point-in-time copy of the counters, as served by `GET /metrics`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct MetricsSnapshot {
    pub chat_backend_calls: u64,
    pub summary_backend_calls: u64,
    pub summary_requests: u64,
    pub summary_cache_hits: u64,
    pub summary_latency_micros_total: u64,
    pub messages: u64,
    pub patients: u64,
    pub sessions: u64,
}

impl Metrics {
    pub fn snapshot(&self, patients: usize, sessions: usize) -> MetricsSnapshot {
        let get = |c: &AtomicU64| c.load(Ordering::Relaxed);
        MetricsSnapshot {
            chat_backend_calls: get(&self.chat_backend_calls),
            summary_backend_calls: get(&self.summary_backend_calls),
            summary_requests: get(&self.summary_requests),
            summary_cache_hits: get(&self.summary_cache_hits),
            summary_latency_micros_total: get(&self.summary_latency_micros_total),
            messages: get(&self.messages),
            patients: patients as u64,
            sessions: sessions as u64,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Counter {
    Chat,
    Summary,
}

/// Counts every call that reaches the wrapped backend.
pub(crate) struct CountingBackend {
    inner: Arc<dyn LlmBackend>,
    metrics: Arc<Metrics>,
    counter: Counter,
}

impl CountingBackend {
    pub(crate) fn wrap(inner: Arc<dyn LlmBackend>, metrics: Arc<Metrics>, counter: Counter) -> Arc<dyn LlmBackend> {
        Arc::new(Self { inner, metrics, counter })
    }

    fn bump(&self) {
        let c = match self.counter {
            Counter::Chat => &self.metrics.chat_backend_calls,
            Counter::Summary => &self.metrics.summary_backend_calls,
        };
        c.fetch_add(1, Ordering::Relaxed);
    }
}

impl LlmBackend for CountingBackend {
    fn complete(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        config: &BackendConfig,
    ) -> Result<CompletionResult, BackendError> {
        self.bump();
        self.inner.complete(messages, tools, config)
    }

    fn complete_streaming(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        config: &BackendConfig,
        on_chunk: &mut dyn FnMut(&str),
    ) -> Result<CompletionResult, BackendError> {
        self.bump();
        self.inner.complete_streaming(messages, tools, config, on_chunk)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
