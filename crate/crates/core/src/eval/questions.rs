use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::chat::{EventKind, SessionEvent};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
}

/// Questions asked, in order, in every evaluation run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuestionSet {
    pub questions: Vec<Question>,
}

const DEFAULT_QUESTIONS: [(&str, &str); 7] = [
    ("Q1", "What are my current medications and how should I be taking them?"),
    ("Q2", "What are the most common side effects for each medication I am taking?"),
    ("Q3", "Am I allergic to any of my medications?"),
    ("Q4", "Can you summarize my current medical conditions?"),
    (
        "Q5",
        "What are the health behaviors I should be incorporating into my daily routine to help with my conditions?",
    ),
    ("Q6", "Can you summarize my current medical conditions in German?"),
    (
        "Q7",
        "What are my recent laboratory values, what do they mean, and how can I improve them?",
    ),
];

impl Default for QuestionSet {
    fn default() -> Self {
        Self {
            questions: DEFAULT_QUESTIONS
                .iter()
                .map(|(id, text)| Question {
                    id: id.to_string(),
                    text: text.to_string(),
                })
                .collect(),
        }
    }
}

impl QuestionSet {
    pub fn validate(&self) -> Result<(), String> {
        if self.questions.is_empty() {
            return Err("question set is empty".into());
        }
        let mut seen = HashSet::new();
        for q in &self.questions {
            if !seen.insert(q.id.as_str()) {
                return Err(format!("duplicate question id {:?}", q.id));
            }
            if q.text.trim().is_empty() {
                return Err(format!("question {:?} has no text", q.id));
            }
        }
        Ok(())
    }

    pub fn by_text(&self, text: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.text == text)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.questions.iter().map(|q| q.id.as_str()).collect()
    }
}

/// A user message from a transcript and how the exchange ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Answer {
    /// The matching question id, or `U{n}` for text outside the set.
    pub question_id: String,
    pub question: String,
    /// `None` when the exchange ended in an error event.
    pub reply: Option<String>,
}

/// Pairs each user message with the terminal event that follows it.
pub fn transcript_answers(events: &[SessionEvent], questions: &QuestionSet) -> Vec<Answer> {
    let mut answers: Vec<Answer> = Vec::new();
    let mut open = false;
    for event in events {
        match event.kind {
            EventKind::UserMessage => {
                let question_id = questions
                    .by_text(&event.payload)
                    .map(|q| q.id.clone())
                    .unwrap_or_else(|| format!("U{}", answers.len() + 1));
                answers.push(Answer {
                    question_id,
                    question: event.payload.clone(),
                    reply: None,
                });
                open = true;
            }
            EventKind::AssistantDone if open => {
                if let Some(last) = answers.last_mut() {
                    last.reply = Some(event.payload.clone());
                }
                open = false;
            }
            EventKind::Error => open = false,
            _ => {}
        }
    }
    answers
}
