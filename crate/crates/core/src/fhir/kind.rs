use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// The resource types the pipeline distinguishes. Anything else is carried
/// as [`ResourceKind::Other`] with its original `resourceType`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResourceKind {
    Patient,
    MedicationRequest,
    Observation,
    Condition,
    AllergyIntolerance,
    Procedure,
    Immunization,
    DiagnosticReport,
    Encounter,
    CarePlan,
    Other(String),
}

impl ResourceKind {
    pub const KNOWN: [ResourceKind; 10] = [
        ResourceKind::Patient,
        ResourceKind::MedicationRequest,
        ResourceKind::Observation,
        ResourceKind::Condition,
        ResourceKind::AllergyIntolerance,
        ResourceKind::Procedure,
        ResourceKind::Immunization,
        ResourceKind::DiagnosticReport,
        ResourceKind::Encounter,
        ResourceKind::CarePlan,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            ResourceKind::Patient => "Patient",
            ResourceKind::MedicationRequest => "MedicationRequest",
            ResourceKind::Observation => "Observation",
            ResourceKind::Condition => "Condition",
            ResourceKind::AllergyIntolerance => "AllergyIntolerance",
            ResourceKind::Procedure => "Procedure",
            ResourceKind::Immunization => "Immunization",
            ResourceKind::DiagnosticReport => "DiagnosticReport",
            ResourceKind::Encounter => "Encounter",
            ResourceKind::CarePlan => "CarePlan",
            ResourceKind::Other(name) => name,
        }
    }
}

impl FromStr for ResourceKind {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Self::KNOWN
            .iter()
            .find(|k| k.as_str() == s)
            .cloned()
            .unwrap_or_else(|| ResourceKind::Other(s.to_string())))
    }
}

impl From<&str> for ResourceKind {
    fn from(s: &str) -> Self {
        s.parse().unwrap_or_else(|e| match e {})
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for ResourceKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ResourceKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(ResourceKind::from(s.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_names_round_trip() {
        for kind in ResourceKind::KNOWN {
            assert_eq!(ResourceKind::from(kind.as_str()), kind);
        }
    }

    #[test]
    fn unknown_names_are_kept() {
        let kind = ResourceKind::from("ExplanationOfBenefit");
        assert_eq!(kind, ResourceKind::Other("ExplanationOfBenefit".into()));
        assert_eq!(kind.to_string(), "ExplanationOfBenefit");
    }
}
