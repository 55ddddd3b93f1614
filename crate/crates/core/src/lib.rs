//! Conversational access to FHIR health records.
//!
//! The crate is organised along the data flow of a chat turn:
//!
//! * [`fhir`] parses R4 bundles into typed [`fhir::ResourceEnvelope`]s that keep
//!   the raw JSON around.
//! * [`pipeline`] filters those envelopes and names each survivor with a
//!   `kind | display name | date` identifier, producing a [`pipeline::Catalog`].
//! * [`llm`] defines the chat-completions backend contract with a scripted mock
//!   and an OpenAI-compatible HTTP client.
//! * [`summarizer`] turns single resources into short summaries and longer
//!   interpretations.
//! * [`chat`] runs the tool-calling loop over a catalog.
//! * [`eval`] drives scripted question plans, aggregates Likert scores and
//!   measures answer variability.

pub mod chat;
pub mod clock;
pub mod eval;
pub mod fhir;
pub mod llm;
pub mod locale;
pub mod pipeline;
pub mod summarizer;

pub(crate) mod util;

#[cfg(test)]
pub(crate) mod testutil {
    use chrono::NaiveDate;

    use crate::fhir::{parse_bundle, Bundle};

    pub fn reference_date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 12, 1).unwrap()
    }

    pub fn fixture(name: &str) -> Bundle {
        let path = format!("{}/tests/fixtures/bundles/{name}.json", env!("CARGO_MANIFEST_DIR"));
        let bytes = std::fs::read(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
        parse_bundle(&bytes, name).unwrap()
    }
}
