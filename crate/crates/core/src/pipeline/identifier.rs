use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fhir::{FhirDateTime, ResourceEnvelope, ResourceKind};

/// The `kind | display name | date` triplet naming one catalog entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResourceIdentifier {
    pub kind: ResourceKind,
    pub display_name: String,
    pub date: Option<FhirDateTime>,
}

impl ResourceIdentifier {
    pub const SEPARATOR: &'static str = " | ";

    pub fn render(&self) -> String {
        let date = self
            .date
            .as_ref()
            .map(ToString::to_string)
            .unwrap_or_else(|| "unknown".into());
        format!("{}{sep}{}{sep}{}", self.kind, self.display_name, date, sep = Self::SEPARATOR)
    }
}

impl fmt::Display for ResourceIdentifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Names an envelope for function calling. Total: falls back to
/// `"{kind} {logical_id}"` when the resource carries no usable text.
pub fn compute_identifier(envelope: &ResourceEnvelope) -> ResourceIdentifier {
    let display_name = envelope
        .display_text
        .clone()
        .or_else(|| envelope.primary_code.as_ref().and_then(|c| c.display.clone()))
        .unwrap_or_else(|| format!("{} {}", envelope.kind, envelope.logical_id));
    ResourceIdentifier {
        kind: envelope.kind.clone(),
        display_name,
        date: envelope.effective_date.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn medication_request_triplet() {
        let env = ResourceEnvelope::from_value(&json!({
            "resourceType": "MedicationRequest", "id": "m",
            "medicationCodeableConcept": {"text": "Simvastatin 20 MG Oral Tablet"},
            "authoredOn": "2020-03-01"
        }));
        let id = compute_identifier(&env);
        assert_eq!(id.render(), "MedicationRequest | Simvastatin 20 MG Oral Tablet | 2020-03-01");
    }

    #[test]
    fn fallback_name_and_unknown_date() {
        let env = ResourceEnvelope::from_value(&json!({
            "resourceType": "Observation", "id": "obs-9",
            "code": {"coding": [{"system": "http://loinc.org", "code": "0000-0"}]}
        }));
        let id = compute_identifier(&env);
        assert_eq!(id.display_name, "Observation obs-9");
        assert_eq!(id.date, None);
        assert_eq!(id.render(), "Observation | Observation obs-9 | unknown");
    }
}
