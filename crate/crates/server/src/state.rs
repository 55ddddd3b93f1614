use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use chrono::{DateTime, NaiveDate, Utc};
use fhirlit_core::chat::{ChatSession, SessionEvent, SharedSession};
use fhirlit_core::clock::{Clock, SystemClock};
use fhirlit_core::fhir::parse_bundle;
use fhirlit_core::llm::LlmBackend;
use fhirlit_core::pipeline::{build_catalog, Catalog};
use fhirlit_core::summarizer::{Summarizer, SummaryCache};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::config::ServerConfig;
use crate::error::{ApiError, ErrorCode};
use crate::metrics::{Counter, CountingBackend, Metrics};

const PATIENTS_DIR: &str = "patients";
const CACHE_DIR: &str = "cache";

pub struct PatientRecord {
    pub patient_id: String,
    pub catalog: Arc<Catalog>,
    pub uploaded_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionHandle {
    pub session_id: String,
    pub patient_id: String,
    pub patient_label: String,
    pub locale: String,
    pub created_at: DateTime<Utc>,
}

pub struct SessionEntry {
    pub handle: SessionHandle,
    pub session: SharedSession,
    in_flight: AtomicBool,
    last_used: Mutex<Instant>,
    log: Mutex<Vec<SessionEvent>>,
}

impl SessionEntry {
    fn touch(&self) {
        *self.last_used.lock().unwrap_or_else(|p| p.into_inner()) = Instant::now();
    }

    fn idle_for(&self, now: Instant) -> Duration {
        now.saturating_duration_since(*self.last_used.lock().unwrap_or_else(|p| p.into_inner()))
    }

    pub fn record(&self, event: &SessionEvent) {
        self.log.lock().unwrap_or_else(|p| p.into_inner()).push(event.clone());
    }

    /// Logged events with a sequence number above `after`.
    pub fn events_after(&self, after: Option<u64>) -> Vec<SessionEvent> {
        let log = self.log.lock().unwrap_or_else(|p| p.into_inner());
        log.iter().filter(|e| after.is_none_or(|a| e.seq > a)).cloned().collect()
    }

    /// Marks the session busy until the returned guard drops.
    pub fn begin(self: &Arc<Self>) -> Result<InFlight, ApiError> {
        if self.in_flight.swap(true, Ordering::AcqRel) {
            return Err(ApiError::new(ErrorCode::SessionBusy, "a message is already being answered in this session"));
        }
        self.touch();
        Ok(InFlight(self.clone()))
    }
}

pub struct InFlight(Arc<SessionEntry>);

impl Drop for InFlight {
    fn drop(&mut self) {
        self.0.touch();
        self.0.in_flight.store(false, Ordering::Release);
    }
}

struct Inner {
    config: ServerConfig,
    patients: RwLock<HashMap<String, Arc<PatientRecord>>>,
    sessions: RwLock<HashMap<String, Arc<SessionEntry>>>,
    chat_backend: Arc<dyn LlmBackend>,
    summarizer: Arc<Summarizer>,
    metrics: Arc<Metrics>,
    clock: Arc<dyn Clock>,
}

/// Everything the handlers share. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("backend: {0}")]
    Backend(String),
    #[error("invalid config: {0}")]
    Config(String),
}

impl AppState {
    /// Builds the state with the backends named in the config.
    pub fn from_config(config: ServerConfig) -> Result<Self, StartupError> {
        let (chat, summary) = config
            .backend
            .build(&config.session)
            .map_err(|e| StartupError::Backend(e.to_string()))?;
        Self::with_backends(config, chat, summary)
    }

    /// Builds the state around explicit backends, restoring any patients and
    /// summaries already stored under the data directory.
    pub fn with_backends(
        config: ServerConfig,
        chat: Arc<dyn LlmBackend>,
        summary: Arc<dyn LlmBackend>,
    ) -> Result<Self, StartupError> {
        config.session.validate().map_err(|e| StartupError::Config(e.to_string()))?;
        config.filter.validate().map_err(|e| StartupError::Config(e.to_string()))?;
        let patients_dir = config.data_dir.join(PATIENTS_DIR);
        std::fs::create_dir_all(&patients_dir).map_err(|e| StartupError::Io(patients_dir.clone(), e))?;
        let cache_dir = config.data_dir.join(CACHE_DIR);
        let cache = SummaryCache::persistent(&cache_dir).map_err(|e| StartupError::Io(cache_dir, e))?;

        let metrics = Arc::new(Metrics::default());
        let clock: Arc<dyn Clock> = Arc::new(SystemClock::new());
        let summary = CountingBackend::wrap(summary, metrics.clone(), Counter::Summary);
        let summarizer =
            Summarizer::new(summary, config.session.backend.clone(), Arc::new(cache)).with_clock(clock.clone());
        let state = Self {
            inner: Arc::new(Inner {
                chat_backend: CountingBackend::wrap(chat, metrics.clone(), Counter::Chat),
                summarizer: Arc::new(summarizer),
                patients: RwLock::default(),
                sessions: RwLock::default(),
                metrics,
                clock,
                config,
            }),
        };
        state.restore_patients(&patients_dir);
        Ok(state)
    }

    fn restore_patients(&self, dir: &Path) {
        let Ok(listing) = std::fs::read_dir(dir) else { return };
        let mut paths: Vec<PathBuf> = listing
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else { continue };
            let uploaded_at = std::fs::metadata(&path)
                .and_then(|m| m.modified())
                .map(DateTime::<Utc>::from)
                .unwrap_or_else(|_| self.now());
            let restored = std::fs::read(&path)
                .map_err(|e| e.to_string())
                .and_then(|bytes| self.catalog_from_bytes(&bytes, &id).map_err(|e| e.message));
            match restored {
                Ok(catalog) => {
                    self.write_patients().insert(
                        id.clone(),
                        Arc::new(PatientRecord {
                            patient_id: id,
                            catalog: Arc::new(catalog),
                            uploaded_at,
                        }),
                    );
                }
                Err(e) => tracing::warn!(patient_id = %id, error = %e, "skipping stored patient"),
            }
        }
        tracing::info!(patients = self.read_patients().len(), "restored patients");
    }

    pub fn config(&self) -> &ServerConfig {
        &self.inner.config
    }

    pub fn metrics(&self) -> &Metrics {
        &self.inner.metrics
    }

    pub fn summarizer(&self) -> &Arc<Summarizer> {
        &self.inner.summarizer
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.inner.clock.now()
    }

    fn reference_date(&self) -> NaiveDate {
        self.inner.config.reference_date.unwrap_or_else(|| self.now().date_naive())
    }

    fn read_patients(&self) -> std::sync::RwLockReadGuard<'_, HashMap<String, Arc<PatientRecord>>> {
        self.inner.patients.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write_patients(&self) -> std::sync::RwLockWriteGuard<'_, HashMap<String, Arc<PatientRecord>>> {
        self.inner.patients.write().unwrap_or_else(|p| p.into_inner())
    }

    fn read_sessions(&self) -> std::sync::RwLockReadGuard<'_, HashMap<String, Arc<SessionEntry>>> {
        self.inner.sessions.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write_sessions(&self) -> std::sync::RwLockWriteGuard<'_, HashMap<String, Arc<SessionEntry>>> {
        self.inner.sessions.write().unwrap_or_else(|p| p.into_inner())
    }

    fn catalog_from_bytes(&self, bytes: &[u8], label: &str) -> Result<Catalog, ApiError> {
        let bundle = parse_bundle(bytes, label)?;
        Ok(build_catalog(&bundle, &self.inner.config.filter, self.reference_date())?)
    }

    /// Parses, catalogs and stores an uploaded bundle.
    pub fn add_patient(&self, bytes: &[u8]) -> Result<Arc<PatientRecord>, ApiError> {
        let patient_id = random_id(16);
        let catalog = self.catalog_from_bytes(bytes, &patient_id)?;
        let path = self.inner.config.data_dir.join(PATIENTS_DIR).join(format!("{patient_id}.json"));
        std::fs::write(&path, bytes).map_err(|e| ApiError::internal(format!("storing patient: {e}")))?;
        let record = Arc::new(PatientRecord {
            patient_id: patient_id.clone(),
            catalog: Arc::new(catalog),
            uploaded_at: self.now(),
        });
        self.write_patients().insert(patient_id, record.clone());
        Ok(record)
    }

    pub fn patient(&self, patient_id: &str) -> Result<Arc<PatientRecord>, ApiError> {
        self.read_patients()
            .get(patient_id)
            .cloned()
            .ok_or_else(|| ApiError::new(ErrorCode::PatientNotFound, format!("no patient {patient_id}")))
    }

    /// All patients, oldest upload first.
    pub fn patients(&self) -> Vec<Arc<PatientRecord>> {
        let mut all: Vec<_> = self.read_patients().values().cloned().collect();
        all.sort_by(|a, b| (a.uploaded_at, &a.patient_id).cmp(&(b.uploaded_at, &b.patient_id)));
        all
    }

    pub fn open_session(&self, patient_id: &str, locale: Option<String>) -> Result<SessionHandle, ApiError> {
        let patient = self.patient(patient_id)?;
        let mut config = self.inner.config.session.clone();
        if let Some(locale) = locale {
            config.locale = locale;
        }
        let session_id = random_id(32);
        let handle = SessionHandle {
            session_id: session_id.clone(),
            patient_id: patient.patient_id.clone(),
            patient_label: patient.catalog.patient.display_name(),
            locale: config.locale.clone(),
            created_at: self.now(),
        };
        let session = ChatSession::new(
            session_id.clone(),
            patient.catalog.clone(),
            config,
            self.inner.chat_backend.clone(),
            self.inner.summarizer.clone(),
        )
        .map_err(|e| ApiError::new(ErrorCode::InvalidRequest, e.to_string()))?
        .with_clock(self.inner.clock.clone());
        let entry = Arc::new(SessionEntry {
            handle: handle.clone(),
            session: SharedSession::new(session),
            in_flight: AtomicBool::new(false),
            last_used: Mutex::new(Instant::now()),
            log: Mutex::default(),
        });
        self.write_sessions().insert(session_id, entry);
        Ok(handle)
    }

    /// Looks up a live session; one idle past the timeout is evicted and
    /// reported as missing.
    pub fn session(&self, session_id: &str) -> Result<Arc<SessionEntry>, ApiError> {
        let missing = || ApiError::new(ErrorCode::SessionNotFound, format!("no session {session_id}"));
        let entry = self.read_sessions().get(session_id).cloned().ok_or_else(missing)?;
        if self.expired(&entry, Instant::now()) {
            self.write_sessions().remove(session_id);
            return Err(missing());
        }
        Ok(entry)
    }

    pub fn close_session(&self, session_id: &str) -> Result<(), ApiError> {
        self.write_sessions()
            .remove(session_id)
            .map(|_| ())
            .ok_or_else(|| ApiError::new(ErrorCode::SessionNotFound, format!("no session {session_id}")))
    }

    fn expired(&self, entry: &SessionEntry, now: Instant) -> bool {
        !entry.in_flight.load(Ordering::Acquire) && entry.idle_for(now) > self.inner.config.session_idle_timeout
    }

    /// Drops sessions idle longer than the configured timeout, as seen at
    /// `now`. Returns how many were dropped.
    pub fn evict_idle(&self, now: Instant) -> usize {
        let mut sessions = self.write_sessions();
        let before = sessions.len();
        sessions.retain(|_, entry| !self.expired(entry, now));
        before - sessions.len()
    }

    pub fn counts(&self) -> (usize, usize) {
        (self.read_patients().len(), self.read_sessions().len())
    }
}

fn random_id(bytes: usize) -> String {
    let mut buf = vec![0u8; bytes];
    rand::rng().fill_bytes(&mut buf);
    hex::encode(buf)
}
