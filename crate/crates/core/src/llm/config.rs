use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::BackendError;

/// Model and transport settings for a backend call.
///
/// The API key is never part of the config; only the name of the
/// environment variable holding it is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub model_name: String,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<i64>,
    pub max_output_tokens: u32,
    pub base_url: String,
    pub api_key_env: String,
    #[serde(with = "secs")]
    pub request_timeout: Duration,
    pub max_retries: u32,
    pub context_window_tokens: usize,
    pub stream: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            model_name: "gpt-4-1106-preview".into(),
            temperature: 0.0,
            seed: None,
            max_output_tokens: 1024,
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            request_timeout: Duration::from_secs(120),
            max_retries: 3,
            context_window_tokens: 128_000,
            stream: false,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.request_timeout.is_zero() {
            return Err(BackendError::InvalidRequest("request_timeout must be positive".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let config = BackendConfig::default();
        config.validate().unwrap();
        assert_eq!(config.model_name, "gpt-4-1106-preview");
        assert_eq!(config.temperature, 0.0);
    }

    #[test]
    fn out_of_range_values_rejected() {
        let hot = BackendConfig { temperature: 2.5, ..Default::default() };
        assert!(hot.validate().is_err());
        let instant = BackendConfig { request_timeout: Duration::ZERO, ..Default::default() };
        assert!(instant.validate().is_err());
    }

    #[test]
    fn timeout_reads_as_seconds() {
        let config: BackendConfig = serde_json::from_str(r#"{"request_timeout": 2.5, "seed": 7}"#).unwrap();
        assert_eq!(config.request_timeout, Duration::from_millis(2500));
        assert_eq!(config.seed, Some(7));
    }
}
