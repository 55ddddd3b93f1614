use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::questions::{transcript_answers, QuestionSet};
use super::EvalError;
use crate::chat::SessionEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Accuracy,
    Relevance,
    Understandability,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Accuracy, Dimension::Relevance, Dimension::Understandability];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Accuracy => "accuracy",
            Dimension::Relevance => "relevance",
            Dimension::Understandability => "understandability",
        }
    }
}

/// Likert ratings (1 = strongly disagree, 5 = strongly agree) for one answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub question_id: String,
    pub accuracy: u8,
    pub relevance: u8,
    pub understandability: u8,
}

impl QuestionScore {
    pub fn get(&self, dimension: Dimension) -> u8 {
        match dimension {
            Dimension::Accuracy => self.accuracy,
            Dimension::Relevance => self.relevance,
            Dimension::Understandability => self.understandability,
        }
    }
}

/// One reviewer's ratings of one transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreSheet {
    pub transcript: String,
    pub reviewer: String,
    pub scores: Vec<QuestionScore>,
}

impl ScoreSheet {
    pub fn validate(&self) -> Result<(), EvalError> {
        for score in &self.scores {
            for dimension in Dimension::ALL {
                let value = score.get(dimension);
                if !(1..=5).contains(&value) {
                    return Err(EvalError::InvalidScore(format!(
                        "{} {} {}: {value} is outside 1..5",
                        self.transcript,
                        score.question_id,
                        dimension.as_str()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdDevKind {
    /// Divide by n.
    #[default]
    Population,
    /// Divide by n - 1; reported as 0 when n = 1.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub question_id: String,
    pub dimension: Dimension,
    pub mean: f64,
    pub std_dev: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub std_dev_kind: StdDevKind,
    pub rows: Vec<StatRow>,
}

impl AggregateStats {
    pub fn get(&self, question_id: &str, dimension: Dimension) -> Option<&StatRow> {
        self.rows
            .iter()
            .find(|r| r.question_id == question_id && r.dimension == dimension)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("question_id,dimension,mean,std_dev,n\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.question_id,
                r.dimension.as_str(),
                r.mean,
                r.std_dev,
                r.n
            ));
        }
        out
    }
}

#[derive(Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn std_dev(&self, kind: StdDevKind) -> f64 {
        let denom = match kind {
            StdDevKind::Population => self.n,
            StdDevKind::Sample => self.n.saturating_sub(1),
        };
        if denom == 0 {
            0.0
        } else {
            (self.m2.max(0.0) / denom as f64).sqrt()
        }
    }
}

/// Mean and standard deviation per (question, dimension), rows ordered by
/// question id then dimension.
pub fn aggregate_scores(sheets: &[ScoreSheet], kind: StdDevKind) -> Result<AggregateStats, EvalError> {
    let mut groups: BTreeMap<(&str, Dimension), Welford> = BTreeMap::new();
    for sheet in sheets {
        sheet.validate()?;
        for score in &sheet.scores {
            for dimension in Dimension::ALL {
                groups
                    .entry((score.question_id.as_str(), dimension))
                    .or_default()
                    .push(f64::from(score.get(dimension)));
            }
        }
    }
    if groups.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let rows = groups
        .into_iter()
        .map(|((question_id, dimension), w)| StatRow {
            question_id: question_id.to_string(),
            dimension,
            mean: w.mean,
            std_dev: w.std_dev(kind),
            n: w.n,
        })
        .collect();
    Ok(AggregateStats { std_dev_kind: kind, rows })
}

fn ask_likert(label: &str, input: &mut dyn BufRead, output: &mut dyn Write) -> Result<u8, EvalError> {
    loop {
        write!(output, "  {label} [1-5]: ").map_err(EvalError::Stdio)?;
        output.flush().map_err(EvalError::Stdio)?;
        let mut line = String::new();
        if input.read_line(&mut line).map_err(EvalError::Stdio)? == 0 {
            return Err(EvalError::Invalid("input ended before scoring finished".into()));
        }
        match line.trim().parse::<u8>() {
            Ok(v @ 1..=5) => return Ok(v),
            _ => writeln!(output, "  please enter a whole number from 1 to 5").map_err(EvalError::Stdio)?,
        }
    }
}

/// Walks the answered questions of a transcript, prints each answer and
/// reads the three ratings from `input`.
pub fn score_interactively(
    transcript: &str,
    events: &[SessionEvent],
    questions: &QuestionSet,
    reviewer: &str,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
) -> Result<ScoreSheet, EvalError> {
    let mut scores = Vec::new();
    for answer in transcript_answers(events, questions) {
        let Some(reply) = answer.reply else {
            writeln!(output, "{}: {}\n  (no answer, skipped)\n", answer.question_id, answer.question)
                .map_err(EvalError::Stdio)?;
            continue;
        };
        writeln!(output, "{}: {}\n\n{}\n", answer.question_id, answer.question, reply).map_err(EvalError::Stdio)?;
        scores.push(QuestionScore {
            question_id: answer.question_id,
            accuracy: ask_likert("accuracy", input, output)?,
            relevance: ask_likert("relevance", input, output)?,
            understandability: ask_likert("understandability", input, output)?,
        });
    }
    Ok(ScoreSheet {
        transcript: transcript.to_string(),
        reviewer: reviewer.to_string(),
        scores,
    })
}
