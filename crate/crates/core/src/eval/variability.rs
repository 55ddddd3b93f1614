use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::questions::{transcript_answers, QuestionSet};
use super::EvalError;
use crate::chat::read_transcript;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilityReport {
    pub question_id: String,
    pub responses: usize,
    /// Unordered pairs of responses that are equal after normalization.
    pub pairwise_exact_matches: usize,
    pub distinct_responses: usize,
    /// Per response: share of ground-truth terms not mentioned.
    pub omission_fractions: Vec<f64>,
    pub missing_terms: Vec<Vec<String>>,
    /// Share of responses missing at least one term.
    pub aggregate_omission_rate: f64,
}

/// Trims and collapses internal whitespace runs to one space.
pub fn normalize_response(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Compares repeated answers to one question. Terms are matched as
/// case-insensitive substrings, so paraphrases count as omissions.
pub fn variability_analysis(
    responses: &[String],
    question_id: &str,
    ground_truth_terms: &[String],
) -> Result<VariabilityReport, EvalError> {
    if ground_truth_terms.is_empty() {
        return Err(EvalError::NoGroundTruth);
    }
    if responses.len() < 2 {
        return Err(EvalError::TooFewResponses(responses.len()));
    }
    let normalized: Vec<String> = responses.iter().map(|r| normalize_response(r)).collect();
    let mut pairwise = 0;
    for (i, a) in normalized.iter().enumerate() {
        pairwise += normalized[i + 1..].iter().filter(|b| *b == a).count();
    }
    let distinct = normalized.iter().collect::<HashSet<_>>().len();

    let terms: Vec<(String, String)> = ground_truth_terms
        .iter()
        .map(|t| (t.clone(), t.to_lowercase()))
        .collect();
    let mut fractions = Vec::new();
    let mut missing_terms = Vec::new();
    for response in &normalized {
        let lower = response.to_lowercase();
        let missing: Vec<String> = terms
            .iter()
            .filter(|(_, needle)| !lower.contains(needle.as_str()))
            .map(|(original, _)| original.clone())
            .collect();
        fractions.push(missing.len() as f64 / terms.len() as f64);
        missing_terms.push(missing);
    }
    let omitting = missing_terms.iter().filter(|m| !m.is_empty()).count();
    Ok(VariabilityReport {
        question_id: question_id.to_string(),
        responses: responses.len(),
        pairwise_exact_matches: pairwise,
        distinct_responses: distinct,
        omission_fractions: fractions,
        missing_terms,
        aggregate_omission_rate: omitting as f64 / responses.len() as f64,
    })
}

/// Expected terms for every transcript, or per patient label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroundTruth {
    Shared(Vec<String>),
    PerPatient(BTreeMap<String, Vec<String>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    /// Patient label, or `*` when one term list covers every transcript.
    pub group: String,
    pub transcripts: Vec<String>,
    pub report: VariabilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectoryVariability {
    pub question_id: String,
    pub groups: Vec<GroupReport>,
    /// Responses missing at least one term, over all groups.
    pub pooled_omission_rate: f64,
}

/// Splits `{patient}_{rep}.ndjson` into the patient label.
pub fn transcript_patient(file_name: &str) -> Option<&str> {
    let stem = file_name.strip_suffix(".ndjson")?;
    let (patient, rep) = stem.rsplit_once('_')?;
    rep.parse::<u32>().ok().map(|_| patient)
}

/// Runs [`variability_analysis`] over the transcripts in `dir`, grouped
/// by patient when the ground truth is per patient.
pub fn analyze_transcript_dir(
    dir: &Path,
    question_id: &str,
    truth: &GroundTruth,
    questions: &QuestionSet,
) -> Result<DirectoryVariability, EvalError> {
    let mut files: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| EvalError::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| transcript_patient(n).is_some())
        .collect();
    files.sort();

    let mut grouped: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    for file in files {
        let group = match truth {
            GroundTruth::Shared(_) => "*".to_string(),
            GroundTruth::PerPatient(map) => {
                let patient = transcript_patient(&file).unwrap_or_default();
                if !map.contains_key(patient) {
                    continue;
                }
                patient.to_string()
            }
        };
        let path = dir.join(&file);
        let events = read_transcript(&path).map_err(|e| EvalError::io(&path, e))?;
        for answer in transcript_answers(&events, questions) {
            if answer.question_id == question_id {
                if let Some(reply) = answer.reply {
                    grouped.entry(group.clone()).or_default().push((file.clone(), reply));
                }
            }
        }
    }
    if grouped.is_empty() {
        return Err(EvalError::TooFewResponses(0));
    }

    let mut groups = Vec::new();
    let mut omitted = 0usize;
    let mut total = 0usize;
    for (group, answers) in grouped {
        let terms = match truth {
            GroundTruth::Shared(terms) => terms,
            GroundTruth::PerPatient(map) => &map[&group],
        };
        let responses: Vec<String> = answers.iter().map(|(_, r)| r.clone()).collect();
        let report = variability_analysis(&responses, question_id, terms)?;
        omitted += report.missing_terms.iter().filter(|m| !m.is_empty()).count();
        total += report.responses;
        groups.push(GroupReport {
            group,
            transcripts: answers.into_iter().map(|(f, _)| f).collect(),
            report,
        });
    }
    Ok(DirectoryVariability {
        question_id: question_id.to_string(),
        groups,
        pooled_omission_rate: omitted as f64 / total as f64,
    })
}
