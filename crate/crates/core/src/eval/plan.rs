use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::questions::{transcript_answers, QuestionSet};
use super::EvalError;
use crate::chat::{new_session, write_transcript, SessionConfig};
use crate::clock::{Clock, FixedClock, LogicalClock, SystemClock};
use crate::fhir::parse_bundle;
use crate::llm::{mock_script, LlmBackend, OpenAiBackend, ScriptStep};
use crate::pipeline::FilterConfig;
use crate::summarizer::{Summarizer, SummaryCache};
use crate::util::sha256_hex;

/// Which backend a plan talks to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    /// Scripted replies for the chat loop and for resource summaries.
    Mock {
        chat: Vec<ScriptStep>,
        #[serde(default = "default_summary_script")]
        summary: Vec<ScriptStep>,
    },
    /// The OpenAI-compatible endpoint described by the session's backend
    /// config, with the key read from its environment variable.
    Live,
}

fn default_summary_script() -> Vec<ScriptStep> {
    vec![ScriptStep::text("Summary of {user_line:1}")]
}

impl BackendSpec {
    /// Returns the chat backend and the summary backend.
    pub fn build(&self, session: &SessionConfig) -> Result<(Arc<dyn LlmBackend>, Arc<dyn LlmBackend>), EvalError> {
        match self {
            BackendSpec::Mock { chat, summary } => Ok((
                Arc::new(mock_script(chat.clone())?),
                Arc::new(mock_script(summary.clone())?),
            )),
            BackendSpec::Live => {
                let backend: Arc<dyn LlmBackend> = Arc::new(OpenAiBackend::from_env(&session.backend)?);
                Ok((backend.clone(), backend))
            }
        }
    }
}

fn default_repetitions() -> u32 {
    1
}

fn default_workers() -> usize {
    1
}

fn default_reference_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date")
}

fn default_clock_start() -> DateTime<Utc> {
    DateTime::from_timestamp(1_704_067_200, 0).expect("valid timestamp")
}

/// A batch of scripted conversations: every patient, every repetition,
/// every question in order, each repetition in a fresh session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunPlan {
    /// Bundle paths, relative to the plan file when loaded with [`RunPlan::load`].
    pub patients: Vec<PathBuf>,
    #[serde(default)]
    pub questions: QuestionSet,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    pub backend: BackendSpec,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub session: SessionConfig,
    /// "Today" for age computation.
    #[serde(default = "default_reference_date")]
    pub reference_date: NaiveDate,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Transcript timestamps come from a logical clock starting here, so
    /// reruns produce identical files.
    #[serde(default = "default_clock_start")]
    pub clock_start: DateTime<Utc>,
}

impl RunPlan {
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
        let mut plan: RunPlan =
            serde_json::from_str(&text).map_err(|e| EvalError::Invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for patient in &mut plan.patients {
            if patient.is_relative() {
                *patient = base.join(&*patient);
            }
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.patients.is_empty() {
            return Err(EvalError::Invalid("plan lists no patients".into()));
        }
        if self.repetitions == 0 {
            return Err(EvalError::Invalid("repetitions must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(EvalError::Invalid("workers must be at least 1".into()));
        }
        self.questions.validate().map_err(EvalError::Invalid)?;
        self.filter.validate().map_err(|e| EvalError::Invalid(e.to_string()))?;
        self.session.validate().map_err(|e| EvalError::Invalid(e.to_string()))?;
        let labels = self.patient_labels();
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(EvalError::Invalid("two patient files share a name".into()));
        }
        Ok(())
    }

    pub fn patient_labels(&self) -> Vec<String> {
        self.patients.iter().map(|p| patient_label(p)).collect()
    }

    /// Hash of the plan's canonical JSON.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("plan serializes").as_bytes())
    }
}

pub fn patient_label(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn transcript_name(patient: &str, repetition: u32) -> String {
    format!("{patient}_{repetition}.ndjson")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub patient: String,
    pub repetition: u32,
    pub transcript: String,
    pub answered: usize,
    pub failed: usize,
}

/// Written next to the transcripts as `run_meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub plan_hash: String,
    pub backend: String,
    pub session: SessionConfig,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub runs: Vec<RunRecord>,
    pub answered: usize,
    pub failed: usize,
}

pub const RUN_META_FILE: &str = "run_meta.json";

/// Runs every (patient, repetition) pair and writes one transcript each
/// into `out_dir`. Backend failures are recorded in the transcript and
/// counted; the remaining questions and runs still execute.
pub fn run_plan(plan: &RunPlan, out_dir: &Path) -> Result<RunMeta, EvalError> {
    plan.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| EvalError::io(out_dir, e))?;
    let wall = SystemClock::new();
    let started_at = wall.now();

    let mut bundles = Vec::new();
    for path in &plan.patients {
        let bytes = std::fs::read(path).map_err(|e| EvalError::io(path, e))?;
        let bundle = parse_bundle(&bytes, &path.display().to_string()).map_err(|source| EvalError::Fhir {
            path: path.clone(),
            source,
        })?;
        bundles.push((patient_label(path), bundle));
    }

    let (chat_backend, summary_backend) = plan.backend.build(&plan.session)?;
    let summarizer = Arc::new(
        Summarizer::new(summary_backend, plan.session.backend.clone(), Arc::new(SummaryCache::in_memory()))
            .with_clock(Arc::new(FixedClock(plan.clock_start))),
    );

    let jobs: Vec<(usize, u32)> = (0..bundles.len())
        .flat_map(|p| (1..=plan.repetitions).map(move |r| (p, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| EvalError::Invalid(e.to_string()))?;

    let runs: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, rep)| {
                let (label, bundle) = &bundles[p];
                let mut session = new_session(
                    format!("{label}_{rep}"),
                    bundle,
                    plan.session.clone(),
                    &plan.filter,
                    plan.reference_date,
                    chat_backend.clone(),
                    summarizer.clone(),
                )?
                .with_clock(Arc::new(LogicalClock::new(plan.clock_start)));
                session.clear(&mut |_| {});
                let mut failed = 0;
                for question in &plan.questions.questions {
                    if let Err(e) = session.ask(&question.text, &mut |_| {}) {
                        tracing::warn!(patient = %label, repetition = rep, question = %question.id, error = %e, "question failed");
                        failed += 1;
                    }
                }
                let name = transcript_name(label, rep);
                write_atomically(&out_dir.join(&name), |out| write_transcript(session.events(), out))?;
                let answered = transcript_answers(session.events(), &plan.questions)
                    .iter()
                    .filter(|a| a.reply.is_some())
                    .count();
                Ok(RunRecord {
                    patient: label.clone(),
                    repetition: rep,
                    transcript: name,
                    answered,
                    failed,
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()
    })?;

    let meta = RunMeta {
        plan_hash: plan.hash(),
        backend: chat_backend.name().to_string(),
        session: plan.session.clone(),
        started_at,
        finished_at: wall.now(),
        answered: runs.iter().map(|r| r.answered).sum(),
        failed: runs.iter().map(|r| r.failed).sum(),
        runs,
    };
    write_atomically(&out_dir.join(RUN_META_FILE), |out| {
        serde_json::to_writer_pretty(&mut *out, &meta)?;
        out.write_all(b"\n")
    })?;
    Ok(meta)
}

/// Writes through a temporary file in the target directory, then renames.
pub(crate) fn write_atomically(
    path: &Path,
    write: impl FnOnce(&mut std::io::BufWriter<&mut std::fs::File>) -> std::io::Result<()>,
) -> Result<(), EvalError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| EvalError::io(dir, e))?;
    {
        let mut out = std::io::BufWriter::new(tmp.as_file_mut());
        write(&mut out).and_then(|_| out.flush()).map_err(|e| EvalError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| EvalError::io(path, e.error))?;
    Ok(())
}
