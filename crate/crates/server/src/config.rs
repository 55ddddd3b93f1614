use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::NaiveDate;
use fhirlit_core::chat::SessionConfig;
use fhirlit_core::eval::BackendSpec;
use fhirlit_core::llm::ScriptStep;
use fhirlit_core::pipeline::FilterConfig;
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Service settings, loadable from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    pub max_body_bytes: usize,
    #[serde(with = "secs")]
    pub session_idle_timeout: Duration,
    /// Origins allowed by CORS; empty disables cross-origin access.
    pub cors_allowed_origins: Vec<String>,
    /// "Today" for patient ages; the current date when unset.
    pub reference_date: Option<NaiveDate>,
    pub backend: BackendSpec,
    pub filter: FilterConfig,
    pub session: SessionConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("fhirlit-data"),
            max_body_bytes: 16 * 1024 * 1024,
            session_idle_timeout: Duration::from_secs(3600),
            cors_allowed_origins: Vec::new(),
            reference_date: None,
            backend: default_mock(),
            filter: FilterConfig::default(),
            session: SessionConfig::default(),
        }
    }
}

/// A scripted backend that looks up the patient's medications once and
/// then echoes what it found.
pub fn default_mock() -> BackendSpec {
    BackendSpec::Mock {
        chat: vec![
            ScriptStep::call("get_resources", json!({"names": "{identifiers:MedicationRequest}"})),
            ScriptStep::text("Here is what I found in your records:\n{tool_results}"),
        ],
        summary: vec![ScriptStep::text("{user_line:1}")],
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("{0}: {1}")]
    Parse(PathBuf, String),
}

impl ServerConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| ConfigError::Parse(path.to_path_buf(), e))
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_secs())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_secs)
    }
}
