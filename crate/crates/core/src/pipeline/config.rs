use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fhir::ResourceKind;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Rules that shrink a bundle to a catalog small enough for the model's
/// context window.
///
/// Configuration keys (TOML or JSON):
///
/// | key | default |
/// |-----|---------|
/// | `medication_statuses_kept` | `["active"]` |
/// | `medication_categories_kept` | `["outpatient"]` |
/// | `latest_only_kinds` | `["Observation", "Condition", "DiagnosticReport"]` |
/// | `included_kinds` | medication requests, allergies, conditions, observations, reports, procedures, immunizations |
/// | `condition_code_denylist` | `[]` |
/// | `max_catalog_entries` | `128` |
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub medication_statuses_kept: BTreeSet<String>,
    pub medication_categories_kept: BTreeSet<String>,
    pub latest_only_kinds: BTreeSet<ResourceKind>,
    pub included_kinds: BTreeSet<ResourceKind>,
    /// Condition codes never exposed, e.g. social-history findings.
    pub condition_code_denylist: BTreeSet<String>,
    pub max_catalog_entries: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        use ResourceKind::*;
        Self {
            medication_statuses_kept: ["active".to_string()].into(),
            medication_categories_kept: ["outpatient".to_string()].into(),
            latest_only_kinds: [Observation, Condition, DiagnosticReport].into(),
            included_kinds: [
                MedicationRequest,
                AllergyIntolerance,
                Condition,
                Observation,
                DiagnosticReport,
                Procedure,
                Immunization,
            ]
            .into(),
            condition_code_denylist: BTreeSet::new(),
            max_catalog_entries: 128,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_catalog_entries == 0 {
            return Err(ConfigError::Invalid("max_catalog_entries must be at least 1".into()));
        }
        if self.included_kinds.contains(&ResourceKind::Patient) {
            return Err(ConfigError::Invalid("Patient cannot be a catalog kind".into()));
        }
        Ok(())
    }

    /// Loads a config file; `.json` files are read as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let parse_err = |message: String| ConfigError::Parse {
            path: path.display().to_string(),
            message,
        };
        let config: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_keeps_defaults() {
        let config: FilterConfig = toml::from_str(
            r#"
            max_catalog_entries = 40
            condition_code_denylist = ["224299000"]
            "#,
        )
        .unwrap();
        assert_eq!(config.max_catalog_entries, 40);
        assert!(config.medication_statuses_kept.contains("active"));
        assert!(config.condition_code_denylist.contains("224299000"));
    }

    #[test]
    fn zero_cap_is_rejected() {
        let config = FilterConfig {
            max_catalog_entries: 0,
            ..FilterConfig::default()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FilterConfig>("max_entries = 3").is_err());
    }
}
