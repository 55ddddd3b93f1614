//! Tool-calling chat over a patient's catalog.
//!
//! A session starts with two fixed messages, the system prompt and the
//! patient record, and exposes one tool, `get_resources`, whose allowed
//! values are the catalog's identifiers. Tool results carry summaries,
//! never raw FHIR JSON.

mod event;
mod session;
mod tool;

pub use event::{read_transcript, write_transcript, EventKind, SessionEvent};
pub use session::{new_session, ChatError, ChatSession, SessionConfig, SharedSession, DEFAULT_SYSTEM_PROMPT, FALLBACK_REPLY};
pub use tool::{dispatch, get_resources_spec, GET_RESOURCES};

#[cfg(test)]
mod tests;
