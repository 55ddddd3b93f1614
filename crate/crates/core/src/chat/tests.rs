use std::sync::Arc;

use chrono::{DateTime, Utc};
use proptest::prelude::*;
use serde_json::{json, Value};

use super::*;
use crate::clock::LogicalClock;
use crate::llm::{mock_script, BackendConfig, LlmBackend, MockBackend, Role, ScriptStep};
use crate::pipeline::FilterConfig;
use crate::summarizer::{Summarizer, SummaryCache};
use crate::testutil::{fixture, reference_date};

const SIMVASTATIN: &str = "MedicationRequest | Simvastatin 20 MG Oral Tablet | 2020-03-01";

fn epoch() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2024-01-01T00:00:00Z").unwrap().to_utc()
}

fn summarizer() -> Arc<Summarizer> {
    Arc::new(Summarizer::new(
        Arc::new(MockBackend::fixed("About {user_line:1}")),
        BackendConfig::default(),
        Arc::new(SummaryCache::in_memory()),
    ))
}

fn session_with(patient: &str, backend: Arc<dyn LlmBackend>, config: SessionConfig) -> ChatSession {
    new_session(
        "s1",
        &fixture(patient),
        config,
        &FilterConfig::default(),
        reference_date(),
        backend,
        summarizer(),
    )
    .unwrap()
    .with_clock(Arc::new(LogicalClock::new(epoch())))
}

fn session(backend: Arc<dyn LlmBackend>) -> ChatSession {
    session_with("gonzalo160_duenas839", backend, SessionConfig::default())
}

fn script(steps: Vec<ScriptStep>) -> Arc<MockBackend> {
    Arc::new(mock_script(steps).unwrap())
}

fn ignore(_: &SessionEvent) {}

#[test]
fn construction_contract() {
    let s = session(Arc::new(MockBackend::fixed("x")));
    assert_eq!(s.messages().len(), 2);
    assert_eq!(s.tools().len(), 1);
    assert_eq!(s.messages()[0].role, Role::System);
    assert!(s.messages()[1].content.contains("Gonzalo160"));
    assert!(s.messages()[1].content.contains("\"resourceType\":\"Patient\""));
}

#[test]
fn prompt_names_locale() {
    let config = SessionConfig {
        locale: "es".into(),
        ..SessionConfig::default()
    };
    let s = session_with("gonzalo160_duenas839", Arc::new(MockBackend::fixed("x")), config);
    let prompt = &s.messages()[0].content;
    assert!(prompt.contains("locale is es"));
    assert!(prompt.contains("Always respond in Spanish"));
    assert!(prompt.contains("get_resources"));
}

#[test]
fn schema_lists_beatris_allergies() {
    let s = session_with("beatris270_bogan287", Arc::new(MockBackend::fixed("x")), SessionConfig::default());
    let allowed = s.tools()[0].parameters["properties"]["names"]["items"]["enum"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(Value::as_str)
        .filter(|n| n.starts_with("AllergyIntolerance | "))
        .count();
    assert_eq!(allowed, 8);
}

#[test]
fn single_tool_round_gives_six_messages() {
    let backend = script(vec![
        ScriptStep::call(GET_RESOURCES, json!({"names": [SIMVASTATIN]})),
        ScriptStep::text("You take Simvastatin. {tool_results}"),
    ]);
    let mut s = session(backend.clone());
    let mut events = Vec::new();
    let reply = s.ask("What do I take?", &mut |e| events.push(e.clone())).unwrap();
    let roles: Vec<Role> = s.messages().iter().map(|m| m.role).collect();
    assert_eq!(
        roles,
        [Role::System, Role::System, Role::User, Role::Assistant, Role::Tool, Role::Assistant]
    );
    assert_eq!(backend.call_count(), 2);
    assert!(s.tool_calls_closed());

    let tool: Value = serde_json::from_str(&s.messages()[4].content).unwrap();
    assert_eq!(tool["results"][0]["identifier"], SIMVASTATIN);
    assert_eq!(tool["results"][0]["summary"], format!("About Resource: {SIMVASTATIN}"));
    assert!(reply.starts_with("You take Simvastatin. {\"results\""));

    let kinds: Vec<EventKind> = events.iter().map(|e| e.kind).collect();
    assert_eq!(kinds.first(), Some(&EventKind::UserMessage));
    assert_eq!(kinds[1..3], [EventKind::ToolCall, EventKind::ToolResult]);
    assert_eq!(kinds.last(), Some(&EventKind::AssistantDone));
    let chunks: String = events
        .iter()
        .filter(|e| e.kind == EventKind::AssistantChunk)
        .map(|e| e.payload.as_str())
        .collect();
    assert_eq!(chunks, reply);
    assert_eq!(events, s.events());
}

#[test]
fn plain_answer_gives_four_messages() {
    let mut s = session(Arc::new(MockBackend::fixed("Hello")));
    assert_eq!(s.ask("Hi", &mut ignore).unwrap(), "Hello");
    assert_eq!(s.messages().len(), 4);
    assert!(s.messages().iter().all(|m| m.role != Role::Tool));
}

#[test]
fn unknown_names_are_reported_to_the_model() {
    let backend = script(vec![
        ScriptStep::call(GET_RESOURCES, json!({"names": ["Simvastatin 20 MG Oral Tablet", "MedicationRequest | Aspirin | 2020", "Condition"]})),
        ScriptStep::text("{tool_results}"),
    ]);
    let mut s = session(backend);
    let reply = s.ask("q", &mut ignore).unwrap();
    let tool: Value = serde_json::from_str(&reply).unwrap();
    assert_eq!(tool["errors"], json!([{"name": "MedicationRequest | Aspirin | 2020", "error": "no_such_resource"}]));
    let results = tool["results"].as_array().unwrap();
    assert_eq!(results[0]["identifier"], SIMVASTATIN);
    assert!(results[1..].iter().all(|r| r["identifier"].as_str().unwrap().starts_with("Condition | ")));
    assert!(results.len() > 2);
}

#[test]
fn malformed_arguments_and_unknown_tools() {
    let backend = script(vec![
        ScriptStep::call(GET_RESOURCES, json!({"ids": []})),
        ScriptStep::call("lookup", json!({})),
        ScriptStep::text("{tool_results}"),
    ]);
    let mut s = session(backend);
    let reply = s.ask("q", &mut ignore).unwrap();
    let lines: Vec<Value> = reply.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["error"], "invalid_arguments");
    assert_eq!(lines[1]["error"], "unknown_tool");
}

fn tool_calls(k: usize) -> Vec<ScriptStep> {
    let mut steps: Vec<ScriptStep> = (0..k)
        .map(|_| ScriptStep::call(GET_RESOURCES, json!({"names": [SIMVASTATIN]})))
        .collect();
    steps.push(ScriptStep::text("done"));
    steps
}

#[test]
fn cap_hit_returns_fallback() {
    let backend = script(tool_calls(11));
    let mut s = session(backend.clone());
    let mut last = None;
    let err = s.ask("q", &mut |e| last = Some(e.clone())).unwrap_err();
    assert!(matches!(err, ChatError::ToolLoopExceeded { iterations: 10, .. }));
    assert_eq!(backend.call_count(), 11);
    assert_eq!(s.messages().last().unwrap().content, FALLBACK_REPLY);
    let last = last.unwrap();
    assert_eq!(last.kind, EventKind::Error);
    assert!(last.payload.contains("tool_loop_exceeded"));
    assert!(s.tool_calls_closed());

    // Still usable afterwards.
    s.clear(&mut ignore);
    assert!(s.ask("again", &mut ignore).is_err());
}

#[test]
fn backend_failure_rolls_back() {
    let backend = script(vec![ScriptStep::call(GET_RESOURCES, json!({"names": []}))]);
    let mut s = session(backend);
    let mut kinds = Vec::new();
    let err = s.ask("q", &mut |e| kinds.push(e.kind)).unwrap_err();
    assert!(matches!(err, ChatError::Backend(_)));
    assert_eq!(s.messages().len(), 2);
    assert_eq!(kinds.last(), Some(&EventKind::Error));
    assert_eq!(kinds.iter().filter(|k| k.is_terminal()).count(), 1);
}

#[test]
fn empty_message_rejected() {
    let mut s = session(Arc::new(MockBackend::fixed("x")));
    assert!(matches!(s.ask("  ", &mut ignore), Err(ChatError::EmptyMessage)));
    assert!(s.events().is_empty());
}

#[test]
fn clear_restores_prefix_and_replay() {
    let steps = vec![
        ScriptStep::call(GET_RESOURCES, json!({"names": [SIMVASTATIN]})),
        ScriptStep::text("{choice:one|two|three} {tool_results}"),
    ];
    let mut fresh = session(script(steps.clone()));
    let fresh_reply = fresh.ask("What do I take?", &mut ignore).unwrap();

    let mut used = session(script(steps));
    used.ask("Something else", &mut ignore).unwrap();
    let prefix = used.messages()[..2].to_vec();
    used.clear(&mut ignore);
    used.clear(&mut ignore);
    assert_eq!(used.messages(), &prefix[..]);
    assert_eq!(used.ask("What do I take?", &mut ignore).unwrap(), fresh_reply);
    assert_eq!(used.messages(), fresh.messages());
    assert_eq!(used.events().iter().filter(|e| e.kind == EventKind::Cleared).count(), 2);
}

#[test]
fn identical_runs_give_identical_logs() {
    let run = || {
        let mut s = session(script(vec![
            ScriptStep::call(GET_RESOURCES, json!({"names": "{identifiers:MedicationRequest}"})),
            ScriptStep::text("{choice:a|b|c}: {tool_results}"),
        ]));
        s.ask("Q1", &mut ignore).unwrap();
        s.ask("Q2", &mut ignore).unwrap();
        let mut out = Vec::new();
        write_transcript(s.events(), &mut out).unwrap();
        out
    };
    let a = run();
    assert_eq!(a, run());
    let text = String::from_utf8(a).unwrap();
    assert!(text.lines().count() > 4);
}

#[test]
fn transcript_round_trips() {
    let mut s = session(Arc::new(MockBackend::fixed("Hello there")));
    s.ask("Hi", &mut ignore).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.ndjson");
    write_transcript(s.events(), std::fs::File::create(&path).unwrap()).unwrap();
    assert_eq!(read_transcript(&path).unwrap(), s.events());
}

#[test]
fn busy_session_is_rejected() {
    let shared = SharedSession::new(session(Arc::new(MockBackend::fixed("x"))));
    let nested = shared.try_with(|_| shared.ask("hi", &mut ignore)).unwrap();
    assert!(matches!(nested, Err(ChatError::SessionBusy)));
    assert!(shared.ask("hi", &mut ignore).is_ok());
}

#[test]
fn config_validation() {
    let bad = SessionConfig {
        max_tool_iterations: 0,
        ..SessionConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = SessionConfig {
        locale: "not a tag".into(),
        ..SessionConfig::default()
    };
    assert!(bad.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loop_bounds_hold(k in 0usize..14, cap in 1usize..12) {
        let backend = script(tool_calls(k));
        let config = SessionConfig { max_tool_iterations: cap, ..SessionConfig::default() };
        let mut s = session_with("milton509_ortiz186", backend.clone(), config);
        let result = s.ask("q", &mut ignore);
        prop_assert!(backend.call_count() <= cap + 1);
        if k <= cap {
            prop_assert_eq!(result.unwrap(), "done");
            prop_assert_eq!(backend.call_count(), k + 1);
        } else {
            let is_loop_error = matches!(result, Err(ChatError::ToolLoopExceeded { .. }));
            prop_assert!(is_loop_error);
            prop_assert_eq!(backend.call_count(), cap + 1);
        }
        prop_assert!(s.tool_calls_closed());
        prop_assert_eq!(&s.messages()[..2], s.prefix());
        let timestamps: Vec<_> = s.events().iter().map(|e| e.timestamp).collect();
        prop_assert!(timestamps.windows(2).all(|w| w[0] <= w[1]));
    }
}
