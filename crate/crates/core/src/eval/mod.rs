//! Evaluation protocol: scripted question runs, Likert score aggregation,
//! answer variability and cohort selection.

mod cohort;
mod plan;
mod questions;
mod scores;
mod variability;

use std::path::{Path, PathBuf};

pub use cohort::{
    balance_score, select_cohort, AgeBand, Bucket, CohortConstraints, CohortMember, CohortReport, Infeasible,
};
pub use plan::{patient_label, run_plan, transcript_name, BackendSpec, RunMeta, RunPlan, RunRecord, RUN_META_FILE};
pub use questions::{transcript_answers, Answer, Question, QuestionSet};
pub use scores::{
    aggregate_scores, score_interactively, AggregateStats, Dimension, QuestionScore, ScoreSheet, StatRow, StdDevKind,
};
pub use variability::{
    analyze_transcript_dir, normalize_response, transcript_patient, variability_analysis, DirectoryVariability,
    GroundTruth, GroupReport, VariabilityReport,
};

use crate::chat::ChatError;
use crate::fhir::FhirError;
use crate::llm::BackendError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Stdio(std::io::Error),
    #[error("{path}: {source}")]
    Fhir { path: PathBuf, source: FhirError },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error("invalid score: {0}")]
    InvalidScore(String),
    #[error("no scores to aggregate")]
    EmptyInput,
    #[error("ground-truth term list is empty")]
    NoGroundTruth,
    #[error("need at least 2 responses, found {0}")]
    TooFewResponses(usize),
    #[error("cohort constraints cannot be met: {0}")]
    Infeasible(#[from] Infeasible),
}

impl EvalError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
